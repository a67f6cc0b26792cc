#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <stdexcept>
#include <variant>
#include <vector>

#include "nopa/algebra.hpp"
#include "nopa/nopa_model.hpp"

// Composition of optical elements into a source -> elements -> detector
// chain and evaluation of the detector-plane correlation spectra.

namespace nopa {

// Beamsplitter loss with independent per-mode efficiencies.
struct LossElement {
  double efficiency_1 = 1.0;
  double efficiency_2 = 1.0;
};

// Local phase shifts applied to each mode.
struct PhaseShiftElement {
  double angle_1 = 0.0;
  double angle_2 = 0.0;
};

struct NopaElement {
  NopaParams params;
};

using Element = std::variant<NopaElement, LossElement, PhaseShiftElement>;

// eta S + (1 - eta) I per mode: attenuation toward vacuum.
inline SpectralCovariance loss_channel(const SpectralCovariance& s, double efficiency_1,
                                       double efficiency_2) {
  if (efficiency_1 < 0.0 || efficiency_1 > 1.0 || efficiency_2 < 0.0 || efficiency_2 > 1.0) {
    throw std::invalid_argument("loss_channel: efficiency must lie in [0,1]");
  }
  Eigen::Matrix4cd t = Eigen::Matrix4cd::Zero();
  Eigen::Matrix4cd l = Eigen::Matrix4cd::Zero();
  const double a1 = std::sqrt(efficiency_1), a2 = std::sqrt(efficiency_2);
  const double b1 = std::sqrt(1.0 - efficiency_1), b2 = std::sqrt(1.0 - efficiency_2);
  t(0, 0) = t(1, 1) = a1;
  t(2, 2) = t(3, 3) = a2;
  l(0, 0) = l(1, 1) = b1;
  l(2, 2) = l(3, 3) = b2;
  return apply_transfer(t, s, {l});
}

inline SpectralCovariance loss_channel(const SpectralCovariance& s, double efficiency) {
  return loss_channel(s, efficiency, efficiency);
}

// Source of the chain: vacuum, or an externally supplied spectrum provider
// over analysis frequency (e.g. a measured EPR state).
using SpectrumProvider = std::function<SpectralCovariance(double analysis_frequency_mhz)>;

// Frequency-independent symmetric two-mode squeezed source with the given
// per-unit-SNL variances for the squeezed (X1+X2, Y1-Y2) and anti-squeezed
// (X1-X2, Y1+Y2) combinations.
inline SpectrumProvider epr_source(double v_squeezed, double v_antisqueezed) {
  if (v_squeezed <= 0.0 || v_antisqueezed <= 0.0) {
    throw std::invalid_argument("epr_source: variances must be positive");
  }
  const double c = 0.5 * (v_squeezed + v_antisqueezed);
  const double s = 0.5 * (v_squeezed - v_antisqueezed);
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  m(0, 0) = m(1, 1) = m(2, 2) = m(3, 3) = c;
  m(0, 2) = m(2, 0) = s;
  m(1, 3) = m(3, 1) = -s;
  return [m](double f) { return SpectralCovariance(m, f); };
}

// Ordered chain from source to the two balanced homodyne detectors. The
// detection efficiency acts as a final loss on both modes.
struct NetworkChain {
  SpectrumProvider source;  // empty = vacuum
  std::vector<Element> elements;
  double detection_efficiency = 1.0;

  void validate() const {
    if (detection_efficiency <= 0.0 || detection_efficiency > 1.0) {
      throw std::invalid_argument("NetworkChain: detection efficiency must lie in (0,1]");
    }
    for (const auto& e : elements) {
      if (const auto* loss = std::get_if<LossElement>(&e)) {
        if (loss->efficiency_1 < 0.0 || loss->efficiency_1 > 1.0 || loss->efficiency_2 < 0.0 ||
            loss->efficiency_2 > 1.0) {
          throw std::invalid_argument("NetworkChain: loss efficiency must lie in [0,1]");
        }
      } else if (const auto* n = std::get_if<NopaElement>(&e)) {
        n->params.validate();
      }
    }
  }
};

// Detector-plane spectrum: folds the source through every element in order,
// then applies the detection efficiency. detuning_overrides maps element
// index -> detuning (MHz) and applies to NOPA elements only.
inline SpectralCovariance evaluate(const NetworkChain& chain,
                                   const std::map<std::size_t, double>& detuning_overrides,
                                   double analysis_frequency_mhz) {
  chain.validate();
  for (const auto& [index, unused] : detuning_overrides) {
    if (index >= chain.elements.size() ||
        !std::holds_alternative<NopaElement>(chain.elements[index])) {
      throw std::invalid_argument("evaluate: detuning override does not reference a NOPA");
    }
  }

  SpectralCovariance s =
      chain.source ? chain.source(analysis_frequency_mhz) : vacuum_spectrum(analysis_frequency_mhz);

  for (std::size_t i = 0; i < chain.elements.size(); ++i) {
    const Element& e = chain.elements[i];
    if (const auto* n = std::get_if<NopaElement>(&e)) {
      NopaParams p = n->params;
      if (auto it = detuning_overrides.find(i); it != detuning_overrides.end()) {
        p.detuning_mhz = it->second;
      }
      s = output_spectrum(p, s);
    } else if (const auto* loss = std::get_if<LossElement>(&e)) {
      s = loss_channel(s, loss->efficiency_1, loss->efficiency_2);
    } else if (const auto* ph = std::get_if<PhaseShiftElement>(&e)) {
      s = rotate_mode(s, 1, ph->angle_1);
      s = rotate_mode(s, 2, ph->angle_2);
    }
  }
  return loss_channel(s, chain.detection_efficiency);
}

inline SpectralCovariance evaluate(const NetworkChain& chain, double analysis_frequency_mhz) {
  return evaluate(chain, {}, analysis_frequency_mhz);
}

// The four measured quadrature combinations in dB relative to their SNL,
// plus the Duan values for both sign conventions.
struct CorrelationReport {
  double v_xsum_db = 0.0;
  double v_ydiff_db = 0.0;
  double v_xdiff_db = 0.0;
  double v_ysum_db = 0.0;
  double duan_plus = 0.0;   // <d^2(X1+X2)> + <d^2(Y1-Y2)>
  double duan_minus = 0.0;  // <d^2(X1-X2)> + <d^2(Y1+Y2)>
};

inline CorrelationReport correlation_report(const SpectralCovariance& s) {
  const auto xs = QuadCombination::x_sum(), yd = QuadCombination::y_diff();
  const auto xd = QuadCombination::x_diff(), ys = QuadCombination::y_sum();
  const double v_xs = combination_variance(s, xs), v_yd = combination_variance(s, yd);
  const double v_xd = combination_variance(s, xd), v_ys = combination_variance(s, ys);
  CorrelationReport r;
  r.v_xsum_db = to_db_rel_snl(v_xs, xs.snl);
  r.v_ydiff_db = to_db_rel_snl(v_yd, yd.snl);
  r.v_xdiff_db = to_db_rel_snl(v_xd, xd.snl);
  r.v_ysum_db = to_db_rel_snl(v_ys, ys.snl);
  r.duan_plus = v_xs + v_yd;
  r.duan_minus = v_xd + v_ys;
  return r;
}

}  // namespace nopa
