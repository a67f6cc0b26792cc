#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

// Quadrature-basis conventions and spectral covariance algebra for a pair
// of optical modes.
//
// Basis order is (X1, Y1, X2, Y2) for modes 1 = signal, 2 = idler, with
// vacuum variance 1 per quadrature (X = a + a^dag up to an overall scale).
// The vacuum state is therefore the identity matrix and the shot-noise
// limit of a linear combination c is |c|^2; in particular X1 +/- X2 has
// SNL 2 and the Duan bound sits at 4.

namespace nopa {

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kPsdTol = 1e-10;
inline constexpr double kDbFloor = -99.0;

// Hermitian, positive semidefinite 4x4 spectral covariance matrix of the
// two-mode quadratures, evaluated at a single sideband (analysis) frequency.
// Frequency dependence lives in the operations that produce these matrices,
// not in the type itself. Instances are immutable once constructed.
class SpectralCovariance {
 public:
  SpectralCovariance(const Eigen::Matrix4cd& matrix, double analysis_frequency_mhz)
      : matrix_(matrix), analysis_frequency_mhz_(analysis_frequency_mhz) {
    validate();
  }

  const Eigen::Matrix4cd& matrix() const { return matrix_; }
  double analysis_frequency() const { return analysis_frequency_mhz_; }

 private:
  void validate() const {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const std::complex<double> residue = matrix_(i, j) - std::conj(matrix_(j, i));
        if (std::abs(residue) > kHermitianTol) {
          throw std::invalid_argument("SpectralCovariance: matrix is not Hermitian");
        }
      }
      if (matrix_(i, i).real() < 0.0) {
        throw std::invalid_argument("SpectralCovariance: negative diagonal entry");
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> solver(matrix_, Eigen::EigenvaluesOnly);
    if (solver.eigenvalues().minCoeff() < -kPsdTol) {
      throw std::invalid_argument("SpectralCovariance: matrix is not positive semidefinite");
    }
  }

  Eigen::Matrix4cd matrix_;
  double analysis_frequency_mhz_;
};

// Two vacuum modes: unit spectral density in every quadrature.
inline SpectralCovariance vacuum_spectrum(double analysis_frequency_mhz) {
  return SpectralCovariance(Eigen::Matrix4cd::Identity(), analysis_frequency_mhz);
}

// Real linear combination of the four quadratures together with its
// shot-noise-limit variance (sum of squared coefficients by construction).
struct QuadCombination {
  Eigen::Vector4d coefficients;
  double snl;

  explicit QuadCombination(const Eigen::Vector4d& c)
      : coefficients(c), snl(c.squaredNorm()) {}

  static QuadCombination x_sum() { return QuadCombination({1.0, 0.0, 1.0, 0.0}); }
  static QuadCombination y_diff() { return QuadCombination({0.0, 1.0, 0.0, -1.0}); }
  static QuadCombination x_diff() { return QuadCombination({1.0, 0.0, -1.0, 0.0}); }
  static QuadCombination y_sum() { return QuadCombination({0.0, 1.0, 0.0, 1.0}); }
};

// Variance c^T S c of a real combination. The quadratic form of a Hermitian
// matrix is real; any floating-point imaginary residue above kHermitianTol
// is treated as data corruption.
inline double combination_variance(const SpectralCovariance& s, const QuadCombination& c) {
  const Eigen::Vector4cd v = c.coefficients.cast<std::complex<double>>();
  const std::complex<double> form = v.dot(s.matrix() * v);  // conjugate-dot; v is real
  if (std::abs(form.imag()) > kHermitianTol) {
    throw std::invalid_argument("combination_variance: non-real quadratic form");
  }
  return std::max(form.real(), 0.0);
}

// 10*log10(variance/snl); negative values mean squeezing below the SNL.
// A zero variance is reported as the documented floor of -99 dB so that
// CSV output stays finite.
inline double to_db_rel_snl(double variance, double snl) {
  if (snl <= 0.0) {
    throw std::invalid_argument("to_db_rel_snl: snl must be positive");
  }
  if (variance < 0.0) {
    throw std::invalid_argument("to_db_rel_snl: variance must be nonnegative");
  }
  if (variance == 0.0) return kDbFloor;
  return std::max(10.0 * std::log10(variance / snl), kDbFloor);
}

// Duan inseparability value <d^2(X1+X2)> + <d^2(Y1-Y2)>. Values below 4
// certify entanglement in this normalization (each combination has SNL 2);
// vacuum saturates the boundary exactly.
inline double duan_value(const SpectralCovariance& s) {
  return combination_variance(s, QuadCombination::x_sum()) +
         combination_variance(s, QuadCombination::y_diff());
}

// Propagates a spectral covariance through a linear input-output map:
//   S_out = T S_in T^dag + sum_k L_k L_k^dag
// where each L_k couples an auxiliary vacuum port (identity spectrum).
// The result is re-validated against the type invariants.
inline SpectralCovariance apply_transfer(const Eigen::Matrix4cd& t_signal,
                                         const SpectralCovariance& s_in,
                                         const std::vector<Eigen::Matrix4cd>& noise_couplings) {
  Eigen::Matrix4cd out = t_signal * s_in.matrix() * t_signal.adjoint();
  for (const auto& l : noise_couplings) {
    out += l * l.adjoint();
  }
  out = 0.5 * (out + out.adjoint()).eval();  // scrub floating-point asymmetry
  return SpectralCovariance(out, s_in.analysis_frequency());
}

// Local phase rotation of one mode's (X, Y) block; mode_index is 1 or 2.
// Vacuum is invariant and the block determinant is preserved.
inline SpectralCovariance rotate_mode(const SpectralCovariance& s, int mode_index, double angle) {
  if (mode_index != 1 && mode_index != 2) {
    throw std::invalid_argument("rotate_mode: mode_index must be 1 or 2");
  }
  Eigen::Matrix4cd g = Eigen::Matrix4cd::Identity();
  const int k = 2 * (mode_index - 1);
  const double c = std::cos(angle), sn = std::sin(angle);
  g(k, k) = c;
  g(k, k + 1) = sn;
  g(k + 1, k) = -sn;
  g(k + 1, k + 1) = c;
  return apply_transfer(g, s, {});
}

}  // namespace nopa
