#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

// Cavity geometry and the standard relations that turn it into decay rates.
//
// Rates are quoted in ordinary frequency (MHz) to match how cavity
// linewidths are reported; gamma_total is the amplitude HWHM. Conversion
// to angular units happens once, inside the dynamics module.

namespace nopa {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

enum class CavityTopology { kLinear, kRing };

// Physical description of one cavity: lengths in meters, the subharmonic
// output-coupler power transmission, and the measured finesse. For a linear
// cavity geometric_length is the one-way length; for a ring it is the
// round-trip perimeter. The crystal index stretches the optical path.
struct CavityGeometry {
  CavityTopology topology = CavityTopology::kLinear;
  double geometric_length_m = 0.0;
  double crystal_length_m = 0.0;
  double crystal_index = 1.0;
  double coupler_transmission = 0.0;
  double finesse = 0.0;
};

// Derived cavity decay rates. gamma_total = gamma_coupler + gamma_loss,
// escape_efficiency = gamma_coupler / gamma_total.
struct DecayRates {
  double fsr_mhz = 0.0;
  double round_trip_time_s = 0.0;
  double gamma_total_mhz = 0.0;
  double gamma_coupler_mhz = 0.0;
  double gamma_loss_mhz = 0.0;
  double escape_efficiency = 0.0;
};

// Standard cavity relations:
//   L_rt   = k * (geometric - crystal) + k * crystal * index, k = 2 (linear) or 1 (ring)
//   FSR    = c / L_rt
//   gamma  = FSR / (2 F)            amplitude HWHM, ordinary frequency
//   gamma_c = T * FSR / (4 pi)
// so escape_efficiency = T F / (2 pi). A finesse implying escape efficiency
// above 1 is inconsistent with the stated coupler (total round-trip loss
// 2 pi / F must cover the coupler transmission).
inline DecayRates derive_rates(const CavityGeometry& g) {
  if (g.geometric_length_m <= 0.0 || g.crystal_length_m < 0.0 ||
      g.crystal_length_m >= g.geometric_length_m) {
    throw std::invalid_argument("derive_rates: invalid lengths");
  }
  if (g.crystal_index < 1.0) {
    throw std::invalid_argument("derive_rates: crystal index must be >= 1");
  }
  if (g.coupler_transmission <= 0.0 || g.coupler_transmission >= 1.0) {
    throw std::invalid_argument("derive_rates: coupler transmission must be in (0,1)");
  }
  if (g.finesse <= 1.0) {
    throw std::invalid_argument("derive_rates: finesse must exceed 1");
  }

  const double k = (g.topology == CavityTopology::kLinear) ? 2.0 : 1.0;
  const double optical_length =
      k * (g.geometric_length_m - g.crystal_length_m) + k * g.crystal_length_m * g.crystal_index;

  DecayRates r;
  r.fsr_mhz = kSpeedOfLight / optical_length / 1e6;
  r.round_trip_time_s = 1.0 / (r.fsr_mhz * 1e6);
  r.gamma_total_mhz = r.fsr_mhz / (2.0 * g.finesse);
  r.gamma_coupler_mhz = g.coupler_transmission * r.fsr_mhz / (4.0 * std::numbers::pi);
  r.gamma_loss_mhz = r.gamma_total_mhz - r.gamma_coupler_mhz;
  r.escape_efficiency = r.gamma_coupler_mhz / r.gamma_total_mhz;
  if (r.escape_efficiency > 1.0) {
    throw std::invalid_argument(
        "derive_rates: inconsistent geometry, coupler transmission exceeds total "
        "round-trip loss 2*pi/finesse");
  }
  return r;
}

// Below-threshold pump parameter sigma = sqrt(P / P_th) in [0, 1).
inline double pump_amplitude(double pump_power_mw, double threshold_power_mw) {
  if (threshold_power_mw <= 0.0) {
    throw std::invalid_argument("pump_amplitude: threshold power must be positive");
  }
  if (pump_power_mw < 0.0) {
    throw std::invalid_argument("pump_amplitude: pump power must be nonnegative");
  }
  if (pump_power_mw >= threshold_power_mw) {
    throw std::invalid_argument("pump_amplitude: pump power at or above threshold, model invalid");
  }
  return std::sqrt(pump_power_mw / threshold_power_mw);
}

}  // namespace nopa
