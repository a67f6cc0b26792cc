// nopasim: detuning/frequency sweeps, calibration fits and stochastic
// cross-checks for cascaded sub-threshold NOPA chains.
//
// Exit codes: 0 success, 2 configuration error, 3 calibration did not
// converge, 4 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nopa/calibration.hpp"
#include "nopa/langevin.hpp"
#include "nopa/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;
constexpr int kExitIo = 4;

struct CommonOptions {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> points;
};

nopa::SweepConfig load_with_overrides(const CommonOptions& opt) {
  nopa::SweepConfig cfg = nopa::load_config(opt.config_path);
  if (opt.seed) cfg.oracle.seed = *opt.seed;
  if (opt.points) {
    if (*opt.points < 2) throw nopa::ConfigError(0, "--points must be at least 2");
    cfg.sweep.points = *opt.points;
  }
  if (!opt.out_path.empty()) cfg.output_path = opt.out_path;
  return cfg;
}

void print_sweep_summary(const nopa::SweepResult& result) {
  if (result.rows.empty()) return;
  const auto* min_row = &result.rows.front();
  const auto* max_row = &result.rows.front();
  for (const auto& row : result.rows) {
    if (row.report.v_xsum_db < min_row->report.v_xsum_db) min_row = &row;
    if (row.report.v_xsum_db > max_row->report.v_xsum_db) max_row = &row;
  }
  std::printf("rows: %zu\n", result.rows.size());
  std::printf("v_xsum_db:  min %+8.4f dB at %9.4f   max %+8.4f dB at %9.4f\n",
              min_row->report.v_xsum_db, min_row->sweep_var, max_row->report.v_xsum_db,
              max_row->sweep_var);
  min_row = max_row = &result.rows.front();
  for (const auto& row : result.rows) {
    if (row.report.v_xdiff_db < min_row->report.v_xdiff_db) min_row = &row;
    if (row.report.v_xdiff_db > max_row->report.v_xdiff_db) max_row = &row;
  }
  std::printf("v_xdiff_db: min %+8.4f dB at %9.4f   max %+8.4f dB at %9.4f\n",
              min_row->report.v_xdiff_db, min_row->sweep_var, max_row->report.v_xdiff_db,
              max_row->sweep_var);
}

// Monte Carlo spectra of the configured chain versus the frequency-domain
// engine at the configured analysis frequency.
void run_oracle_comparison(const nopa::SweepConfig& cfg, const std::string& dump_path) {
  nopa::SimulationRun run = nopa::make_simulation_run(cfg);
  const double omega = cfg.sweep.analysis_frequency_mhz;

  const double segment_us =
      cfg.oracle.segment_us > 0.0 ? cfg.oracle.segment_us : run.duration_us / 12.0;
  const auto segment_length =
      static_cast<std::size_t>(std::max(8.0, std::floor(segment_us / run.time_step_us)));

  std::printf("oracle: %d trajectories, dt = %.6g us, duration = %.6g us, seed = %llu\n",
              run.n_trajectories, run.time_step_us, run.duration_us,
              static_cast<unsigned long long>(run.rng_seed));

  const std::vector<nopa::QuadCombination> combos = {
      nopa::QuadCombination::x_sum(), nopa::QuadCombination::y_diff(),
      nopa::QuadCombination::x_diff(), nopa::QuadCombination::y_sum()};
  const char* names[] = {"x_sum ", "y_diff", "x_diff", "y_sum "};

  const auto engine = nopa::evaluate(run.chain, {}, omega);
  const auto mc =
      nopa::mc_correlation_spectrum(run, combos, {omega}, segment_length, cfg.oracle.window);

  std::printf("combination   engine        monte-carlo         |z|\n");
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const double reference = nopa::combination_variance(engine, combos[i]);
    const auto& est = mc[i][0];
    const double z = est.std_error > 0.0 ? std::abs(est.value - reference) / est.std_error : 0.0;
    std::printf("%s      %10.6f    %10.6f +- %.6f   %.2f%s\n", names[i], reference, est.value,
                est.std_error, z, z > 3.0 ? "  (outside 3 SE)" : "");
  }

  if (!dump_path.empty()) {
    const nopa::QuadratureSeries series = nopa::simulate(run);
    nopa::write_series_csv(series, run, dump_path);
    std::printf("series written to %s\n", dump_path.c_str());
  }
}

int run_sweep(const CommonOptions& opt) {
  const nopa::SweepConfig cfg = load_with_overrides(opt);
  if (cfg.output_path.empty()) {
    throw nopa::ConfigError(0, "no output path: set [output] path or pass --out");
  }
  const nopa::SweepResult result = cfg.sweep.kind == nopa::SweepKind::kDetuning
                                       ? nopa::run_detuning_sweep(cfg)
                                       : nopa::run_frequency_sweep(cfg);
  nopa::emit_csv(result, cfg.output_path);
  std::printf("wrote %s\n", cfg.output_path.c_str());
  print_sweep_summary(result);
  if (cfg.oracle.enabled) run_oracle_comparison(cfg, "");
  return kExitOk;
}

int run_calibrate(const CommonOptions& opt) {
  const nopa::SweepConfig cfg = load_with_overrides(opt);
  const nopa::CalibrationOutcome outcome = nopa::calibrate(cfg);

  std::printf("calibration %s after %d iterations (objective %.3e dB^2)\n",
              outcome.converged ? "converged" : "DID NOT CONVERGE", outcome.iterations,
              outcome.objective);
  for (std::size_t i = 0; i < outcome.fitted.size(); ++i) {
    std::printf("  %-24s = %.8f\n", outcome.parameter_paths[i].c_str(), outcome.fitted[i]);
  }
  for (const auto& r : outcome.residuals) {
    std::printf("  %-8s target %+7.3f dB  model %+9.5f dB  residual %+9.5f dB%s\n",
                r.target.observable.c_str(), r.target.target_db, r.model_db, r.residual_db,
                r.within_tolerance ? "" : "  (outside tolerance)");
  }

  if (!opt.out_path.empty()) {
    std::ofstream out(opt.out_path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open '" + opt.out_path + "' for writing");
    out << "# calibration report: " << (outcome.converged ? "converged" : "not converged")
        << ", objective " << outcome.objective << " dB^2\n";
    for (std::size_t i = 0; i < outcome.fitted.size(); ++i) {
      char line[128];
      std::snprintf(line, sizeof line, "%s = %.8f\n", outcome.parameter_paths[i].c_str(),
                    outcome.fitted[i]);
      out << line;
    }
    for (const auto& r : outcome.residuals) {
      out << "# " << r.target.observable << " residual_db = " << r.residual_db << "\n";
    }
    if (!out.good()) throw std::ios_base::failure("write failure on '" + opt.out_path + "'");
    std::printf("report written to %s\n", opt.out_path.c_str());
  }
  return outcome.converged ? kExitOk : kExitNoConvergence;
}

int run_oracle(const CommonOptions& opt) {
  const nopa::SweepConfig cfg = load_with_overrides(opt);
  run_oracle_comparison(cfg, opt.out_path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "nopasim: correlation-variance sweeps, calibration and stochastic\n"
      "cross-checks for cascaded sub-threshold optical parametric amplifiers"};
  app.require_subcommand(1);

  CommonOptions opt;
  const auto add_common = [&](CLI::App* sub, bool with_points) {
    sub->add_option("--config", opt.config_path, "configuration file")->required();
    sub->add_option("--out", opt.out_path, "output path");
    sub->add_option("--seed", opt.seed, "override the oracle RNG seed");
    if (with_points) sub->add_option("--points", opt.points, "override the number of sweep points");
  };

  CLI::App* sweep = app.add_subcommand(
      "sweep", "run the configured detuning or frequency sweep and write the CSV");
  add_common(sweep, true);
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "fit the [calibrate] free parameters to their targets");
  add_common(calibrate, false);
  CLI::App* oracle = app.add_subcommand(
      "oracle", "compare Monte Carlo spectra against the frequency-domain engine");
  add_common(oracle, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sweep->parsed()) return run_sweep(opt);
    if (calibrate->parsed()) return run_calibrate(opt);
    if (oracle->parsed()) return run_oracle(opt);
  } catch (const nopa::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::ios_base::failure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
