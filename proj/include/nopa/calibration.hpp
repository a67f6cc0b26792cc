#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nopa/nelder_mead.hpp"
#include "nopa/sweep.hpp"

// Fits free chain parameters to measured correlation levels (in dB relative
// to the SNL) by derivative-free least squares.

namespace nopa {

struct TargetResidual {
  TargetSpec target;
  double model_db = 0.0;
  double residual_db = 0.0;
  bool within_tolerance = false;
};

struct CalibrationOutcome {
  std::vector<std::string> parameter_paths;
  std::vector<double> fitted;
  std::vector<TargetResidual> residuals;
  double objective = 0.0;  // sum of squared dB residuals
  int iterations = 0;
  // True only if the simplex collapsed and every target sits within its
  // stated tolerance; otherwise the fit is reported as best-so-far.
  bool converged = false;
};

// Observable of one calibration target on the configured chain.
inline double evaluate_target_db(const SweepConfig& cfg, const TargetSpec& target,
                                 double far_detuning_mhz) {
  std::optional<double> override_mhz;
  switch (target.point) {
    case TargetPoint::kResonance:
      override_mhz = 0.0;
      break;
    case TargetPoint::kFar:
      override_mhz = far_detuning_mhz;
      break;
    case TargetPoint::kDelta:
      override_mhz = target.delta_mhz;
      break;
  }
  if (cfg.sweep.kind != SweepKind::kDetuning) override_mhz.reset();
  const CorrelationReport r =
      correlation_report(evaluate_config(cfg, override_mhz, cfg.sweep.analysis_frequency_mhz));
  if (target.observable == "xsum_db") return r.v_xsum_db;
  if (target.observable == "ydiff_db") return r.v_ydiff_db;
  if (target.observable == "xdiff_db") return r.v_xdiff_db;
  if (target.observable == "ysum_db") return r.v_ysum_db;
  throw ConfigError(0, "unknown target observable '" + target.observable + "'");
}

// Nelder-Mead least-squares fit of the [calibrate] section: deterministic
// grid-seeded multistart, objective = sum of squared dB residuals. Out-of-
// range intermediate parameter combinations are rejected with a large
// penalty rather than an exception.
inline CalibrationOutcome calibrate(const SweepConfig& cfg) {
  if (!cfg.calibration) {
    throw ConfigError(0, "config has no [calibrate] section");
  }
  const CalibrationSpec& cal = *cfg.calibration;

  std::vector<double> lower, upper;
  for (const auto& p : cal.free_parameters) {
    lower.push_back(p.lower);
    upper.push_back(p.upper);
  }

  const auto objective = [&](const std::vector<double>& x) {
    SweepConfig trial = cfg;
    for (std::size_t i = 0; i < x.size(); ++i) {
      set_parameter(trial, cal.free_parameters[i].path, x[i]);
    }
    double sum = 0.0;
    try {
      for (const auto& t : cal.targets) {
        const double r = evaluate_target_db(trial, t, cal.far_detuning_mhz) - t.target_db;
        sum += r * r;
      }
    } catch (const std::exception&) {
      return 1e9;
    }
    return sum;
  };

  const SimplexResult best =
      nelder_mead_multistart(objective, lower, upper, cal.max_iterations, 1e-14);

  CalibrationOutcome out;
  for (const auto& p : cal.free_parameters) out.parameter_paths.push_back(p.path);
  out.fitted = best.best;
  out.objective = best.best_value;
  out.iterations = best.iterations;

  SweepConfig fitted_cfg = cfg;
  for (std::size_t i = 0; i < best.best.size(); ++i) {
    set_parameter(fitted_cfg, cal.free_parameters[i].path, best.best[i]);
  }
  bool all_within = true;
  for (const auto& t : cal.targets) {
    TargetResidual tr;
    tr.target = t;
    tr.model_db = evaluate_target_db(fitted_cfg, t, cal.far_detuning_mhz);
    tr.residual_db = tr.model_db - t.target_db;
    tr.within_tolerance = std::abs(tr.residual_db) <= t.tolerance_db;
    all_within = all_within && tr.within_tolerance;
    out.residuals.push_back(tr);
  }
  out.converged = best.tolerance_reached && all_within;
  return out;
}

// Config with the fitted parameters applied.
inline SweepConfig applied_config(const SweepConfig& cfg, const CalibrationOutcome& outcome) {
  SweepConfig out = cfg;
  for (std::size_t i = 0; i < outcome.fitted.size(); ++i) {
    set_parameter(out, outcome.parameter_paths[i], outcome.fitted[i]);
  }
  return out;
}

// One-dimensional closed-form solve for a loss efficiency: a beamsplitter
// maps a per-unit-SNL variance v to eta v + (1 - eta), so the efficiency
// reaching target_db from v is eta = (1 - 10^(db/10)) / (1 - v). Used as an
// independent check on the optimizer.
inline double solve_efficiency_for_db(double variance_per_snl, double target_db) {
  const double v_target = std::pow(10.0, target_db / 10.0);
  const double denom = 1.0 - variance_per_snl;
  if (denom == 0.0) {
    throw std::invalid_argument("solve_efficiency_for_db: input variance already at SNL");
  }
  const double eta = (1.0 - v_target) / denom;
  if (eta < 0.0 || eta > 1.0) {
    throw std::invalid_argument("solve_efficiency_for_db: target unreachable by a passive loss");
  }
  return eta;
}

// Monotone bisection for one-dimensional calibration cross-checks.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double x_tolerance = 1e-13, int max_iterations = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw std::invalid_argument("bisect: no sign change over the bracket");
  }
  for (int i = 0; i < max_iterations && (hi - lo) > x_tolerance; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace nopa
