#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "nopa/config.hpp"
#include "nopa/network.hpp"

// Turns a parsed SweepConfig into a network chain and runs detuning or
// frequency sweeps, emitting the fixed-schema CSV.

namespace nopa {

inline NetworkChain build_chain(const SweepConfig& cfg) {
  NetworkChain chain;
  if (cfg.source.kind == SourceKind::kEpr) {
    const double v_sq = std::pow(10.0, cfg.source.squeezing_db / 10.0);
    const double v_anti = cfg.source.antisqueezing_db
                              ? std::pow(10.0, *cfg.source.antisqueezing_db / 10.0)
                              : 1.0 / v_sq;
    chain.source = epr_source(v_sq, v_anti);
  }
  for (const auto& e : cfg.elements) {
    switch (e.kind) {
      case ElementKind::kNopa: {
        NopaElement n;
        n.params.rates = derive_rates(e.nopa.geometry);
        n.params.sigma = e.nopa.sigma;
        n.params.pump_phase = e.nopa.pump_phase;
        n.params.detuning_mhz = e.nopa.detuning_mhz;
        chain.elements.emplace_back(n);
        break;
      }
      case ElementKind::kLoss:
        chain.elements.emplace_back(LossElement{e.loss.efficiency_1, e.loss.efficiency_2});
        break;
      case ElementKind::kPhase:
        chain.elements.emplace_back(PhaseShiftElement{e.phase.angle_1, e.phase.angle_2});
        break;
    }
  }
  chain.detection_efficiency = cfg.detection_efficiency;
  chain.validate();
  return chain;
}

// Dotted parameter paths used by calibration: "<element id>.sigma",
// "<element id>.pump_phase", "<element id>.detuning_mhz",
// "<element id>.efficiency", "<element id>.angle_rad", "detection.efficiency".
inline void set_parameter(SweepConfig& cfg, const std::string& path, double value) {
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size()) {
    throw ConfigError(0, "malformed parameter path '" + path + "'");
  }
  const std::string id = path.substr(0, dot);
  const std::string field = path.substr(dot + 1);
  if (id == "detection") {
    if (field != "efficiency") throw ConfigError(0, "unknown parameter path '" + path + "'");
    cfg.detection_efficiency = value;
    return;
  }
  ElementSpec& e = cfg.elements[cfg.element_index(id)];
  switch (e.kind) {
    case ElementKind::kNopa:
      if (field == "sigma") {
        e.nopa.sigma = value;
      } else if (field == "pump_phase") {
        e.nopa.pump_phase = value;
      } else if (field == "detuning_mhz") {
        e.nopa.detuning_mhz = value;
      } else {
        throw ConfigError(0, "unknown NOPA field in path '" + path + "'");
      }
      break;
    case ElementKind::kLoss:
      if (field != "efficiency") throw ConfigError(0, "unknown loss field in path '" + path + "'");
      e.loss.efficiency_1 = e.loss.efficiency_2 = value;
      break;
    case ElementKind::kPhase:
      if (field != "angle_rad") throw ConfigError(0, "unknown phase field in path '" + path + "'");
      e.phase.angle_1 = e.phase.angle_2 = value;
      break;
  }
}

inline double get_parameter(const SweepConfig& cfg, const std::string& path) {
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw ConfigError(0, "malformed parameter path '" + path + "'");
  const std::string id = path.substr(0, dot);
  const std::string field = path.substr(dot + 1);
  if (id == "detection") return cfg.detection_efficiency;
  const ElementSpec& e = cfg.elements[cfg.element_index(id)];
  switch (e.kind) {
    case ElementKind::kNopa:
      if (field == "sigma") return e.nopa.sigma;
      if (field == "pump_phase") return e.nopa.pump_phase;
      if (field == "detuning_mhz") return e.nopa.detuning_mhz;
      break;
    case ElementKind::kLoss:
      if (field == "efficiency") return e.loss.efficiency_1;
      break;
    case ElementKind::kPhase:
      if (field == "angle_rad") return e.phase.angle_1;
      break;
  }
  throw ConfigError(0, "unknown parameter path '" + path + "'");
}

// Detector-plane spectrum of the configured chain with the swept element's
// detuning overridden (detuning sweeps) or as-is (frequency sweeps).
inline SpectralCovariance evaluate_config(const SweepConfig& cfg,
                                          std::optional<double> detuning_override_mhz,
                                          double analysis_frequency_mhz) {
  const NetworkChain chain = build_chain(cfg);
  std::map<std::size_t, double> overrides;
  if (detuning_override_mhz) {
    overrides[cfg.element_index(cfg.sweep.element_id)] = *detuning_override_mhz;
  }
  return evaluate(chain, overrides, analysis_frequency_mhz);
}

struct SweepRow {
  double sweep_var = 0.0;
  CorrelationReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

namespace detail {

// Deterministic parallel map over an index range; results land by index.
template <typename Fn>
void parallel_for_indexed(std::size_t n, Fn&& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(hw, n));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (unsigned w = 0; w < n_threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += n_threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Correlation reports versus the swept element's cavity detuning at the
// configured analysis frequency; rows ascend in detuning. dB columns are
// relative to the SNL (0 dB reference).
inline SweepResult run_detuning_sweep(const SweepConfig& cfg) {
  if (cfg.sweep.kind != SweepKind::kDetuning) {
    throw std::invalid_argument("run_detuning_sweep: config sweep kind is not 'detuning'");
  }
  const NetworkChain chain = build_chain(cfg);
  const std::size_t element = cfg.element_index(cfg.sweep.element_id);
  const int n = cfg.sweep.points;

  SweepResult result;
  result.rows.resize(static_cast<std::size_t>(n));
  detail::parallel_for_indexed(static_cast<std::size_t>(n), [&](std::size_t i) {
    const double delta = cfg.sweep.min_mhz + (cfg.sweep.max_mhz - cfg.sweep.min_mhz) *
                                                 static_cast<double>(i) /
                                                 static_cast<double>(n - 1);
    const auto s = evaluate(chain, {{element, delta}}, cfg.sweep.analysis_frequency_mhz);
    result.rows[i] = {delta, correlation_report(s)};
  });
  return result;
}

// Correlation reports versus analysis frequency at the configured (fixed)
// element detunings.
inline SweepResult run_frequency_sweep(const SweepConfig& cfg) {
  if (cfg.sweep.kind != SweepKind::kFrequency) {
    throw std::invalid_argument("run_frequency_sweep: config sweep kind is not 'frequency'");
  }
  const NetworkChain chain = build_chain(cfg);
  const int n = cfg.sweep.points;

  SweepResult result;
  result.rows.resize(static_cast<std::size_t>(n));
  detail::parallel_for_indexed(static_cast<std::size_t>(n), [&](std::size_t i) {
    const double f = cfg.sweep.min_mhz + (cfg.sweep.max_mhz - cfg.sweep.min_mhz) *
                                             static_cast<double>(i) / static_cast<double>(n - 1);
    result.rows[i] = {f, correlation_report(evaluate(chain, {}, f))};
  });
  return result;
}

// Fixed CSV schema: 6-decimal fixed formatting, LF line endings.
inline constexpr const char* kCsvHeader =
    "sweep_var,v_xsum_db,v_ydiff_db,v_xdiff_db,v_ysum_db,duan_plus,duan_minus";

inline void emit_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::ios_base::failure("emit_csv: cannot open '" + path + "' for writing");
  }
  out << kCsvHeader << "\n";
  char line[256];
  for (const auto& row : result.rows) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.sweep_var,
                  row.report.v_xsum_db, row.report.v_ydiff_db, row.report.v_xdiff_db,
                  row.report.v_ysum_db, row.report.duan_plus, row.report.duan_minus);
    out << line;
  }
  out.flush();
  if (!out.good()) {
    throw std::ios_base::failure("emit_csv: write failure on '" + path + "'");
  }
}

// Simulation run for the configured chain with documented defaults: the
// time step resolves the fastest drift rate, the duration covers the
// slowest one, both with margin over the type invariants.
inline SimulationRun make_simulation_run(const SweepConfig& cfg) {
  SimulationRun run;
  run.chain = build_chain(cfg);
  const auto env = detail::rate_envelope(run.chain);
  const double fastest = env.any_nopa ? env.fastest : 10.0;
  const double slowest = env.any_nopa ? env.slowest : 1.0;
  run.time_step_us = cfg.oracle.time_step_us > 0.0 ? cfg.oracle.time_step_us : 0.01 / fastest;
  run.duration_us = cfg.oracle.duration_us > 0.0 ? cfg.oracle.duration_us : 240.0 / slowest;
  run.rng_seed = cfg.oracle.seed;
  run.n_trajectories = cfg.oracle.trajectories;
  run.validate();
  return run;
}

}  // namespace nopa
