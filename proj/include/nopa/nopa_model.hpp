#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "nopa/algebra.hpp"
#include "nopa/cavity.hpp"

// Frequency-domain model of a single detuned, sub-threshold, type-II NOPA.
//
// The intracavity signal/idler pair decouples into superposition modes
// d+- = (a1 +- a2)/sqrt(2), each obeying degenerate-parametric dynamics with
// pump +-epsilon. In the quadrature basis (X+, Y+, X-, Y-) the drift is
// block diagonal with 2x2 blocks
//   M+- = [ -gamma +- eps cos(theta)   delta +- eps sin(theta) ]
//         [ -delta +- eps sin(theta)  -gamma -+ eps cos(theta) ]
// where eps = sigma*gamma and theta is the pump phase (pi = de-amplification).
// All public frequencies are ordinary MHz; the x 2*pi conversion to angular
// units lives in angular_rates() below and nowhere else.

namespace nopa {

// Operational state of one NOPA.
struct NopaParams {
  DecayRates rates;
  double sigma = 0.0;       // pump amplitude, in [0, 1)
  double pump_phase = 0.0;  // radians; 0 amplifies, pi de-amplifies
  double detuning_mhz = 0.0;

  void validate() const {
    if (sigma < 0.0 || sigma >= 1.0) {
      throw std::invalid_argument("NopaParams: sigma must lie in [0,1), below threshold required");
    }
    if (rates.gamma_total_mhz <= 0.0) {
      throw std::invalid_argument("NopaParams: nonpositive total decay rate");
    }
  }
};

// Drift and input couplings in angular units (rad/us when lengths of time
// are microseconds and rates MHz). The only place 2*pi enters the model.
struct AngularRates {
  Eigen::Matrix4d drift;   // block diagonal in the +- basis
  double noise_in = 0.0;   // sqrt(2 gamma_c), angular
  double noise_loss = 0.0; // sqrt(2 gamma_l), angular
};

inline AngularRates angular_rates(const NopaParams& p) {
  p.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double gamma = two_pi * p.rates.gamma_total_mhz;
  const double eps = p.sigma * gamma;
  const double delta = two_pi * p.detuning_mhz;
  const double c = std::cos(p.pump_phase), s = std::sin(p.pump_phase);

  AngularRates ar;
  ar.drift.setZero();
  for (int blk = 0; blk < 2; ++blk) {
    const double sign = (blk == 0) ? 1.0 : -1.0;
    const int k = 2 * blk;
    ar.drift(k, k) = -gamma + sign * eps * c;
    ar.drift(k, k + 1) = delta + sign * eps * s;
    ar.drift(k + 1, k) = -delta + sign * eps * s;
    ar.drift(k + 1, k + 1) = -gamma - sign * eps * c;
  }
  ar.noise_in = std::sqrt(2.0 * two_pi * p.rates.gamma_coupler_mhz);
  ar.noise_loss = std::sqrt(2.0 * two_pi * p.rates.gamma_loss_mhz);
  return ar;
}

// Drift matrix of dv/dt = M v + inputs in the (X+, Y+, X-, Y-) basis.
inline Eigen::Matrix4d drift_matrix(const NopaParams& p) { return angular_rates(p).drift; }

// Orthogonal, symmetric change of basis between (X1,Y1,X2,Y2) and
// (X+,Y+,X-,Y-); its own inverse.
inline const Eigen::Matrix4d& plus_minus_basis() {
  static const Eigen::Matrix4d u = [] {
    const double r = 1.0 / std::numbers::sqrt2;
    Eigen::Matrix4d m;
    m << r, 0, r, 0,
         0, r, 0, r,
         r, 0, -r, 0,
         0, r, 0, -r;
    return m;
  }();
  return u;
}

// Frequency-domain transfer matrices in the lab basis (X1,Y1,X2,Y2) at a
// given analysis frequency. With A(W) = (-iW I - M)^-1 (W angular) and the
// input-output relation a_out = sqrt(2 gamma_c) a - a_in:
//   t_in   = 2 gamma_c A - I      (reflected + emitted signal)
//   t_loss = 2 sqrt(gamma_c gamma_l) A   (vacuum entering via intracavity loss)
inline std::pair<Eigen::Matrix4cd, Eigen::Matrix4cd> transfer_matrices(
    const NopaParams& p, double analysis_frequency_mhz) {
  const AngularRates ar = angular_rates(p);
  const double omega = 2.0 * std::numbers::pi * analysis_frequency_mhz;
  const std::complex<double> iw(0.0, omega);

  Eigen::Matrix4cd t_in = Eigen::Matrix4cd::Zero();
  Eigen::Matrix4cd t_loss = Eigen::Matrix4cd::Zero();
  const double two_gc = ar.noise_in * ar.noise_in;           // 2 gamma_c, angular
  const double cross = ar.noise_in * ar.noise_loss;          // 2 sqrt(gamma_c gamma_l), angular

  for (int blk = 0; blk < 2; ++blk) {
    const int k = 2 * blk;
    Eigen::Matrix2cd shifted = -ar.drift.block<2, 2>(k, k).cast<std::complex<double>>();
    shifted(0, 0) -= iw;
    shifted(1, 1) -= iw;
    const std::complex<double> det = shifted(0, 0) * shifted(1, 1) - shifted(0, 1) * shifted(1, 0);
    // sigma < 1 keeps the cavity stable, so the resolvent cannot be singular;
    // guard against ill-conditioned input regardless.
    if (std::abs(det) < 1e-12 * shifted.squaredNorm()) {
      throw std::runtime_error("transfer_matrices: near-singular cavity response");
    }
    Eigen::Matrix2cd a;
    a << shifted(1, 1), -shifted(0, 1), -shifted(1, 0), shifted(0, 0);
    a /= det;
    t_in.block<2, 2>(k, k) = two_gc * a - Eigen::Matrix2cd::Identity();
    t_loss.block<2, 2>(k, k) = cross * a;
  }

  const Eigen::Matrix4cd u = plus_minus_basis().cast<std::complex<double>>();
  return {u * t_in * u, u * t_loss * u};
}

// Output spectrum of the NOPA for a given input spectrum, evaluated at the
// input's analysis frequency.
inline SpectralCovariance output_spectrum(const NopaParams& p, const SpectralCovariance& s_in) {
  auto [t_in, t_loss] = transfer_matrices(p, s_in.analysis_frequency());
  return apply_transfer(t_in, s_in, {t_loss});
}

// Textbook sub-threshold OPO output spectrum on resonance, used as an
// independent oracle for output_spectrum. With eta the escape efficiency
// and W~ = Omega / gamma_total:
//   v_sq   = 1 - eta 4 sigma / ((1+sigma)^2 + W~^2)
//   v_anti = 1 + eta 4 sigma / ((1-sigma)^2 + W~^2)
// per unit SNL (vacuum = 1).
inline std::pair<double, double> resonant_closed_form(const DecayRates& rates, double sigma,
                                                      double analysis_frequency_mhz) {
  if (sigma < 0.0 || sigma >= 1.0) {
    throw std::invalid_argument("resonant_closed_form: sigma must lie in [0,1)");
  }
  const double eta = rates.escape_efficiency;
  const double w = analysis_frequency_mhz / rates.gamma_total_mhz;
  const double v_squeezed = 1.0 - eta * 4.0 * sigma / ((1.0 + sigma) * (1.0 + sigma) + w * w);
  const double v_antisqueezed = 1.0 + eta * 4.0 * sigma / ((1.0 - sigma) * (1.0 - sigma) + w * w);
  return {v_squeezed, v_antisqueezed};
}

}  // namespace nopa
