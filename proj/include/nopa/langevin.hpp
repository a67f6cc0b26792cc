#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "nopa/network.hpp"

// Stochastic time-domain oracle for the frequency-domain engine.
//
// The linear quantum Langevin equations are integrated with Euler-Maruyama
// in the symmetrized (semiclassical) convention: vacuum inputs are unit
// white noise per quadrature, so every spectral density matches the
// vacuum = 1 normalization of the covariance algebra. Time is measured in
// microseconds, matching MHz rates.

namespace nopa {

// Deterministic per-stream generator: a splitmix64-mixed seed feeds
// mt19937_64, and gaussians come from an explicit Box-Muller transform so
// that results are identical across platforms. Streams derived from
// (seed, stream) pairs are independent regardless of scheduling.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t stream) : engine_(mix(seed, stream)) {}

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = canonical_positive();
    const double u2 = canonical_positive();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1]; never returns 0 so log() stays finite.
  double canonical_positive() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Multichannel time series of the four lab-basis quadratures.
struct QuadratureSeries {
  double dt_us = 0.0;
  std::vector<Eigen::Vector4d> samples;
};

// One stochastic run: the chain to drive, the integration grid and the
// reproducibility contract.
struct SimulationRun {
  NetworkChain chain;
  double time_step_us = 0.0;
  double duration_us = 0.0;
  std::uint64_t rng_seed = 0;
  int n_trajectories = 1;

  void validate() const;
};

namespace detail {

// Block eigenvalues of the drift are lambda = -gamma +- sqrt(eps^2 - delta^2)
// in angular units, identical for both superposition blocks.
struct RateEnvelope {
  double slowest = 0.0;  // min |Re lambda| over NOPAs, rad/us
  double fastest = 0.0;  // max |lambda| over NOPAs, rad/us
  bool any_nopa = false;
};

inline RateEnvelope rate_envelope(const NetworkChain& chain) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  RateEnvelope env;
  for (const auto& e : chain.elements) {
    const auto* n = std::get_if<NopaElement>(&e);
    if (n == nullptr) continue;
    const double gamma = two_pi * n->params.rates.gamma_total_mhz;
    const double eps = n->params.sigma * gamma;
    const double delta = two_pi * n->params.detuning_mhz;
    const double disc = eps * eps - delta * delta;
    double slow, fast;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      slow = gamma - root;
      fast = gamma + root;
    } else {
      slow = gamma;
      fast = std::hypot(gamma, std::sqrt(-disc));
    }
    env.slowest = env.any_nopa ? std::min(env.slowest, slow) : slow;
    env.fastest = env.any_nopa ? std::max(env.fastest, fast) : fast;
    env.any_nopa = true;
  }
  return env;
}

inline void check_step_stability(const NetworkChain& chain, double dt) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const auto& e : chain.elements) {
    const auto* n = std::get_if<NopaElement>(&e);
    if (n == nullptr) continue;
    const double gamma = two_pi * n->params.rates.gamma_total_mhz;
    const double eps = n->params.sigma * gamma;
    const double delta = two_pi * n->params.detuning_mhz;
    const double disc = eps * eps - delta * delta;
    double re[2], im[2];
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      re[0] = -gamma + root;
      re[1] = -gamma - root;
      im[0] = im[1] = 0.0;
    } else {
      re[0] = re[1] = -gamma;
      im[0] = std::sqrt(-disc);
      im[1] = -im[0];
    }
    for (int i = 0; i < 2; ++i) {
      const double gx = 1.0 + re[i] * dt;
      if (gx * gx + im[i] * dt * im[i] * dt >= 1.0) {
        throw std::invalid_argument("SimulationRun: unstable Euler-Maruyama step for drift");
      }
    }
  }
}

}  // namespace detail

inline void SimulationRun::validate() const {
  chain.validate();
  if (time_step_us <= 0.0 || duration_us <= 0.0) {
    throw std::invalid_argument("SimulationRun: time step and duration must be positive");
  }
  if (n_trajectories < 1) {
    throw std::invalid_argument("SimulationRun: need at least one trajectory");
  }
  if (chain.source) {
    throw std::invalid_argument("SimulationRun: only vacuum-source chains can be simulated");
  }
  const auto env = detail::rate_envelope(chain);
  if (env.any_nopa) {
    if (time_step_us > 0.02 / env.fastest) {
      throw std::invalid_argument("SimulationRun: time step too coarse for the fastest rate");
    }
    if (duration_us < 200.0 / env.slowest) {
      throw std::invalid_argument("SimulationRun: duration too short for spectral resolution");
    }
    detail::check_step_stability(chain, time_step_us);
  }
}

namespace detail {

// In-place chain stages over a whole trajectory. Series samples hold the
// field amplitudes in the lab basis; vacuum inputs are white with variance
// 1/dt per sample, which is the discrete representation of unit spectral
// density.
inline void fill_vacuum(std::vector<Eigen::Vector4d>& series, double dt, NoiseStream& rng) {
  const double amp = 1.0 / std::sqrt(dt);
  for (auto& s : series) {
    for (int q = 0; q < 4; ++q) s[q] = amp * rng.gaussian();
  }
}

inline void apply_loss_stage(std::vector<Eigen::Vector4d>& series, double dt, double eta1,
                             double eta2, NoiseStream& rng) {
  if (eta1 == 1.0 && eta2 == 1.0) return;
  const double a1 = std::sqrt(eta1), b1 = std::sqrt((1.0 - eta1) / dt);
  const double a2 = std::sqrt(eta2), b2 = std::sqrt((1.0 - eta2) / dt);
  for (auto& s : series) {
    s[0] = a1 * s[0] + b1 * rng.gaussian();
    s[1] = a1 * s[1] + b1 * rng.gaussian();
    s[2] = a2 * s[2] + b2 * rng.gaussian();
    s[3] = a2 * s[3] + b2 * rng.gaussian();
  }
}

inline void apply_phase_stage(std::vector<Eigen::Vector4d>& series, double phi1, double phi2) {
  const double c1 = std::cos(phi1), s1 = std::sin(phi1);
  const double c2 = std::cos(phi2), s2 = std::sin(phi2);
  for (auto& s : series) {
    const double x1 = s[0], y1 = s[1], x2 = s[2], y2 = s[3];
    s[0] = c1 * x1 + s1 * y1;
    s[1] = -s1 * x1 + c1 * y1;
    s[2] = c2 * x2 + s2 * y2;
    s[3] = -s2 * x2 + c2 * y2;
  }
}

// Euler-Maruyama pass of one NOPA: the series enters as the input field and
// leaves as the output field via a_out = sqrt(2 gamma_c) a - a_in. The
// superposition-mode blocks integrate independently.
inline void apply_nopa_stage(std::vector<Eigen::Vector4d>& series, double dt,
                             const NopaParams& params, NoiseStream& rng) {
  const AngularRates ar = angular_rates(params);
  const double nin = ar.noise_in;
  const double nloss_amp = ar.noise_loss * std::sqrt(dt);
  const double m[2][4] = {
      {ar.drift(0, 0), ar.drift(0, 1), ar.drift(1, 0), ar.drift(1, 1)},
      {ar.drift(2, 2), ar.drift(2, 3), ar.drift(3, 2), ar.drift(3, 3)},
  };
  const bool lossy = params.rates.gamma_loss_mhz > 0.0;
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;

  double v[4] = {0.0, 0.0, 0.0, 0.0};
  for (auto& s : series) {
    // lab -> (X+, Y+, X-, Y-)
    const double u0 = inv_sqrt2 * (s[0] + s[2]);
    const double u1 = inv_sqrt2 * (s[1] + s[3]);
    const double u2 = inv_sqrt2 * (s[0] - s[2]);
    const double u3 = inv_sqrt2 * (s[1] - s[3]);

    const double y0 = nin * v[0] - u0;
    const double y1 = nin * v[1] - u1;
    const double y2 = nin * v[2] - u2;
    const double y3 = nin * v[3] - u3;

    const double d0 = (m[0][0] * v[0] + m[0][1] * v[1] + nin * u0) * dt;
    const double d1 = (m[0][2] * v[0] + m[0][3] * v[1] + nin * u1) * dt;
    const double d2 = (m[1][0] * v[2] + m[1][1] * v[3] + nin * u2) * dt;
    const double d3 = (m[1][2] * v[2] + m[1][3] * v[3] + nin * u3) * dt;
    v[0] += d0;
    v[1] += d1;
    v[2] += d2;
    v[3] += d3;
    if (lossy) {
      v[0] += nloss_amp * rng.gaussian();
      v[1] += nloss_amp * rng.gaussian();
      v[2] += nloss_amp * rng.gaussian();
      v[3] += nloss_amp * rng.gaussian();
    }

    // (X+, Y+, X-, Y-) -> lab
    s[0] = inv_sqrt2 * (y0 + y2);
    s[1] = inv_sqrt2 * (y1 + y3);
    s[2] = inv_sqrt2 * (y0 - y2);
    s[3] = inv_sqrt2 * (y1 - y3);
  }
}

inline std::size_t warmup_samples(const NetworkChain& chain, double dt) {
  const auto env = rate_envelope(chain);
  if (!env.any_nopa) return 0;
  return static_cast<std::size_t>(std::ceil(8.0 / env.slowest / dt));
}

inline QuadratureSeries simulate_trajectory(const SimulationRun& run, int trajectory_index) {
  const double dt = run.time_step_us;
  const std::size_t n_keep = static_cast<std::size_t>(std::llround(run.duration_us / dt));
  const std::size_t n_warm = warmup_samples(run.chain, dt);

  QuadratureSeries series;
  series.dt_us = dt;
  series.samples.resize(n_warm + n_keep);

  const auto stream_for = [&](std::size_t stage) {
    return (static_cast<std::uint64_t>(trajectory_index) << 20) | stage;
  };

  std::size_t stage = 0;
  {
    NoiseStream rng(run.rng_seed, stream_for(stage++));
    fill_vacuum(series.samples, dt, rng);
  }
  for (const auto& e : run.chain.elements) {
    if (const auto* n = std::get_if<NopaElement>(&e)) {
      NoiseStream rng(run.rng_seed, stream_for(stage++));
      apply_nopa_stage(series.samples, dt, n->params, rng);
    } else if (const auto* loss = std::get_if<LossElement>(&e)) {
      NoiseStream rng(run.rng_seed, stream_for(stage++));
      apply_loss_stage(series.samples, dt, loss->efficiency_1, loss->efficiency_2, rng);
    } else if (const auto* ph = std::get_if<PhaseShiftElement>(&e)) {
      apply_phase_stage(series.samples, ph->angle_1, ph->angle_2);
      ++stage;
    }
  }
  if (run.chain.detection_efficiency < 1.0) {
    NoiseStream rng(run.rng_seed, stream_for(stage++));
    apply_loss_stage(series.samples, dt, run.chain.detection_efficiency,
                     run.chain.detection_efficiency, rng);
  }

  series.samples.erase(series.samples.begin(),
                       series.samples.begin() + static_cast<std::ptrdiff_t>(n_warm));
  return series;
}

}  // namespace detail

// Output-port quadrature time series of the chain driven by vacuum noise.
// Deterministic for a fixed rng_seed; the first trajectory of the run.
inline QuadratureSeries simulate(const SimulationRun& run) {
  run.validate();
  return detail::simulate_trajectory(run, 0);
}

enum class SpectralWindow { kRect, kHann };

// Spectral-density estimate with the standard error derived from the
// scatter of per-segment periodograms.
struct SpectrumEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_segments = 0;
};

namespace detail {

struct SegmentProbe {
  std::vector<double> w_cos;
  std::vector<double> w_sin;
  double norm = 0.0;  // sum of squared window values

  SegmentProbe(std::size_t length, double dt, double frequency_mhz, SpectralWindow window) {
    w_cos.resize(length);
    w_sin.resize(length);
    for (std::size_t k = 0; k < length; ++k) {
      double w = 1.0;
      if (window == SpectralWindow::kHann) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) /
                             static_cast<double>(length - 1);
        w = 0.5 * (1.0 - std::cos(phase));
      }
      norm += w * w;
      const double arg = 2.0 * std::numbers::pi * frequency_mhz * dt * static_cast<double>(k);
      w_cos[k] = w * std::cos(arg);
      w_sin[k] = w * std::sin(arg);
    }
  }

  // dt |DFT|^2 / norm: unit white noise of variance 1/dt maps to 1.
  double periodogram(const double* x, double dt) const {
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < w_cos.size(); ++k) {
      re += w_cos[k] * x[k];
      im += w_sin[k] * x[k];
    }
    return dt * (re * re + im * im) / norm;
  }
};

struct MomentAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
  }
  void merge(const MomentAccumulator& other) {
    sum += other.sum;
    sum_sq += other.sum_sq;
    count += other.count;
  }
  SpectrumEstimate estimate() const {
    SpectrumEstimate e;
    e.n_segments = count;
    if (count == 0) return e;
    const double n = static_cast<double>(count);
    e.value = sum / n;
    if (count > 1) {
      const double var = std::max(sum_sq - sum * sum / n, 0.0) / (n - 1.0);
      e.std_error = std::sqrt(var / n);
    }
    return e;
  }
};

}  // namespace detail

// Welch-style averaged periodogram of one quadrature combination at a single
// analysis frequency, normalized so that vacuum gives the combination's SNL.
inline SpectrumEstimate estimate_spectrum(const QuadratureSeries& series,
                                          const QuadCombination& combination,
                                          double analysis_frequency_mhz,
                                          std::size_t segment_length,
                                          SpectralWindow window = SpectralWindow::kHann) {
  if (segment_length < 8) {
    throw std::invalid_argument("estimate_spectrum: segment length too small");
  }
  const std::size_t n_segments = series.samples.size() / segment_length;
  if (n_segments < 4) {
    throw std::invalid_argument("estimate_spectrum: series shorter than 4 segments");
  }
  const detail::SegmentProbe probe(segment_length, series.dt_us, analysis_frequency_mhz, window);
  std::vector<double> x(segment_length);
  detail::MomentAccumulator acc;
  for (std::size_t seg = 0; seg < n_segments; ++seg) {
    const Eigen::Vector4d* base = series.samples.data() + seg * segment_length;
    for (std::size_t k = 0; k < segment_length; ++k) {
      x[k] = combination.coefficients.dot(base[k]);
    }
    acc.add(probe.periodogram(x.data(), series.dt_us));
  }
  return acc.estimate();
}

// Monte Carlo spectra of several combinations at several frequencies,
// pooled over run.n_trajectories trajectories. Trajectories are integrated
// concurrently; per-trajectory accumulators merge in index order so the
// result does not depend on scheduling.
inline std::vector<std::vector<SpectrumEstimate>> mc_correlation_spectrum(
    const SimulationRun& run, const std::vector<QuadCombination>& combinations,
    const std::vector<double>& frequencies_mhz, std::size_t segment_length,
    SpectralWindow window = SpectralWindow::kHann) {
  run.validate();
  if (segment_length < 8) {
    throw std::invalid_argument("mc_correlation_spectrum: segment length too small");
  }

  const std::size_t n_cells = combinations.size() * frequencies_mhz.size();
  std::vector<std::vector<detail::MomentAccumulator>> per_traj(
      static_cast<std::size_t>(run.n_trajectories),
      std::vector<detail::MomentAccumulator>(n_cells));

  const auto worker = [&](int traj) {
    const QuadratureSeries series = detail::simulate_trajectory(run, traj);
    const std::size_t n_segments = series.samples.size() / segment_length;
    std::vector<detail::SegmentProbe> probes;
    probes.reserve(frequencies_mhz.size());
    for (double f : frequencies_mhz) {
      probes.emplace_back(segment_length, series.dt_us, f, window);
    }
    std::vector<double> x(segment_length);
    for (std::size_t ci = 0; ci < combinations.size(); ++ci) {
      for (std::size_t seg = 0; seg < n_segments; ++seg) {
        const Eigen::Vector4d* base = series.samples.data() + seg * segment_length;
        for (std::size_t k = 0; k < segment_length; ++k) {
          x[k] = combinations[ci].coefficients.dot(base[k]);
        }
        for (std::size_t fi = 0; fi < frequencies_mhz.size(); ++fi) {
          per_traj[traj][ci * frequencies_mhz.size() + fi].add(
              probes[fi].periodogram(x.data(), series.dt_us));
        }
      }
    }
  };

  const unsigned n_threads =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(run.n_trajectories));
  if (n_threads <= 1) {
    for (int t = 0; t < run.n_trajectories; ++t) worker(t);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w] {
        for (int t = static_cast<int>(w); t < run.n_trajectories;
             t += static_cast<int>(n_threads)) {
          worker(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::vector<SpectrumEstimate>> out(combinations.size());
  for (std::size_t ci = 0; ci < combinations.size(); ++ci) {
    out[ci].resize(frequencies_mhz.size());
    for (std::size_t fi = 0; fi < frequencies_mhz.size(); ++fi) {
      detail::MomentAccumulator total;
      for (int t = 0; t < run.n_trajectories; ++t) {
        total.merge(per_traj[static_cast<std::size_t>(t)][ci * frequencies_mhz.size() + fi]);
      }
      out[ci][fi] = total.estimate();
    }
  }
  return out;
}

// Raw-series dump: one comment header documenting the run, then
// t_us,x1,y1,x2,y2 rows.
inline void write_series_csv(const QuadratureSeries& series, const SimulationRun& run,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("write_series_csv: cannot open '" + path + "' for writing");
  }
  out << "# quadrature series; seed=" << run.rng_seed << " dt_us=" << series.dt_us
      << " samples=" << series.samples.size() << " trajectories=" << run.n_trajectories << "\n";
  out << "t_us,x1,y1,x2,y2\n";
  char line[192];
  for (std::size_t k = 0; k < series.samples.size(); ++k) {
    const auto& s = series.samples[k];
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  static_cast<double>(k) * series.dt_us, s[0], s[1], s[2], s[3]);
    out << line;
  }
  if (!out.good()) {
    throw std::runtime_error("write_series_csv: write failure on '" + path + "'");
  }
}

}  // namespace nopa
