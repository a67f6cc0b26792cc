#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "nopa/langevin.hpp"

using namespace nopa;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

DecayRates ring_rates() {
  return derive_rates({CavityTopology::kRing, 0.557, 0.010, 1.83, 0.035, 153.0});
}

DecayRates linear_rates() {
  return derive_rates({CavityTopology::kLinear, 0.051, 0.010, 1.83, 0.032, 165.0});
}

DecayRates lossless_ring_rates() {
  DecayRates r = ring_rates();
  r.gamma_coupler_mhz = r.gamma_total_mhz;
  r.gamma_loss_mhz = 0.0;
  r.escape_efficiency = 1.0;
  return r;
}

SimulationRun single_nopa_run(const DecayRates& rates, double sigma, double theta, double delta,
                              double dt, double duration, std::uint64_t seed, int traj) {
  SimulationRun run;
  run.chain.elements.emplace_back(NopaElement{{rates, sigma, theta, delta}});
  run.time_step_us = dt;
  run.duration_us = duration;
  run.rng_seed = seed;
  run.n_trajectories = traj;
  return run;
}

double z_score(const SpectrumEstimate& est, double reference) {
  return std::abs(est.value - reference) / est.std_error;
}

}  // namespace

TEST_CASE("simulation is deterministic in the seed") {
  const auto run = single_nopa_run(ring_rates(), 0.3, kPi, 1.0, 1e-3, 30.0, 99, 1);
  const QuadratureSeries a = simulate(run);
  const QuadratureSeries b = simulate(run);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    REQUIRE(a.samples[k] == b.samples[k]);
  }

  auto other = run;
  other.rng_seed = 100;
  const QuadratureSeries c = simulate(other);
  REQUIRE(c.samples[10] != a.samples[10]);
}

TEST_CASE("run validation") {
  SECTION("step must resolve the fastest rate") {
    auto run = single_nopa_run(ring_rates(), 0.3, kPi, 0.0, 5e-3, 30.0, 1, 1);
    REQUIRE_THROWS_AS(run.validate(), std::invalid_argument);
  }
  SECTION("duration must resolve the slowest rate") {
    auto run = single_nopa_run(ring_rates(), 0.3, kPi, 0.0, 1e-3, 5.0, 1, 1);
    REQUIRE_THROWS_AS(run.validate(), std::invalid_argument);
  }
  SECTION("at least one trajectory") {
    auto run = single_nopa_run(ring_rates(), 0.3, kPi, 0.0, 1e-3, 30.0, 1, 0);
    REQUIRE_THROWS_AS(run.validate(), std::invalid_argument);
  }
  SECTION("only vacuum sources can be simulated") {
    auto run = single_nopa_run(ring_rates(), 0.3, kPi, 0.0, 1e-3, 30.0, 1, 1);
    run.chain.source = epr_source(0.5, 2.0);
    REQUIRE_THROWS_AS(run.validate(), std::invalid_argument);
  }
}

TEST_CASE("estimator normalization on synthetic white noise") {
  const double dt = 1e-3;
  QuadratureSeries series;
  series.dt_us = dt;
  series.samples.resize(1 << 20);
  NoiseStream rng(314, 0);
  const double amp = 1.0 / std::sqrt(dt);
  for (auto& s : series.samples) {
    for (int q = 0; q < 4; ++q) s[q] = amp * rng.gaussian();
  }
  for (const auto window : {SpectralWindow::kHann, SpectralWindow::kRect}) {
    for (double f : {0.7, 3.3}) {
      const auto est = estimate_spectrum(series, QuadCombination({1, 0, 0, 0}), f, 4096, window);
      INFO("f=" << f << " window=" << (window == SpectralWindow::kHann ? "hann" : "rect"));
      REQUIRE(est.n_segments == 256);
      REQUIRE(z_score(est, 1.0) < 3.0);
    }
  }
  // A combination's SNL scales with the coefficients.
  const auto est = estimate_spectrum(series, QuadCombination::x_sum(), 1.7, 4096);
  REQUIRE(z_score(est, 2.0) < 3.0);
}

TEST_CASE("estimator rejects short input") {
  QuadratureSeries series;
  series.dt_us = 1e-3;
  series.samples.resize(2000, Eigen::Vector4d::Zero());
  // 2000 samples / 1000 per segment = 2 segments, below the minimum of 4
  REQUIRE_THROWS_AS(estimate_spectrum(series, QuadCombination::x_sum(), 1.0, 1000),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(estimate_spectrum(series, QuadCombination::x_sum(), 1.0, 4),
                    std::invalid_argument);
}

TEST_CASE("empty lossless cavity passes vacuum through") {
  const auto run = single_nopa_run(lossless_ring_rates(), 0.0, 0.0, 0.0, 1e-3, 32.0, 7101, 16);
  const auto est = mc_correlation_spectrum(run, {QuadCombination({1, 0, 0, 0})}, {1.0, 3.0}, 4000);
  for (const auto& e : est[0]) {
    REQUIRE(z_score(e, 1.0) < 3.0);
  }

  // The output series itself is white vacuum: sample variance 1/dt.
  const QuadratureSeries series = simulate(run);
  double acc = 0.0;
  for (const auto& s : series.samples) acc += s.squaredNorm();
  const double var = acc / (4.0 * static_cast<double>(series.samples.size()));
  REQUIRE(var * run.time_step_us == Approx(1.0).margin(0.03));
}

TEST_CASE("squeezed spectrum matches the closed form at the operating point") {
  // sigma = 0.7746 at 0.39 cavity linewidths, physical escape efficiency.
  const DecayRates rates = ring_rates();
  const double omega = 0.39 * rates.gamma_total_mhz;
  const auto run = single_nopa_run(rates, 0.7746, kPi, 0.0, 8e-4, 88.0, 2024, 20);
  const auto [v_sq, v_anti] = resonant_closed_form(rates, 0.7746, omega);

  const auto est = mc_correlation_spectrum(
      run, {QuadCombination::x_sum(), QuadCombination::x_diff()}, {omega}, 10000);
  INFO("squeezed mc=" << est[0][0].value << " +- " << est[0][0].std_error
                      << " expected=" << 2.0 * v_sq);
  REQUIRE(z_score(est[0][0], 2.0 * v_sq) < 3.0);
  INFO("anti mc=" << est[1][0].value << " +- " << est[1][0].std_error
                  << " expected=" << 2.0 * v_anti);
  REQUIRE(z_score(est[1][0], 2.0 * v_anti) < 3.0);
}

TEST_CASE("halving the time step moves the estimate by less than its error") {
  const DecayRates rates = ring_rates();
  const double omega = rates.gamma_total_mhz;
  const auto coarse = single_nopa_run(rates, 0.5, kPi, 0.0, 8e-4, 64.0, 501, 12);
  auto fine = coarse;
  fine.time_step_us = 4e-4;
  fine.rng_seed = 502;

  const auto combo = QuadCombination::x_sum();
  const auto a = mc_correlation_spectrum(coarse, {combo}, {omega}, 8000)[0][0];
  const auto b = mc_correlation_spectrum(fine, {combo}, {omega}, 16000)[0][0];
  const double combined = std::hypot(a.std_error, b.std_error);
  INFO("coarse=" << a.value << " fine=" << b.value << " combined SE=" << combined);
  REQUIRE(std::abs(a.value - b.value) < combined);
}

TEST_CASE("cascade resonance level agrees with the frequency-domain engine") {
  SimulationRun run;
  run.chain.elements.emplace_back(NopaElement{{linear_rates(), 0.20440760, kPi, 0.0}});
  run.chain.elements.emplace_back(NopaElement{{ring_rates(), 0.27807814, kPi, 0.0}});
  run.time_step_us = 3e-4;
  run.duration_us = 72.0;
  run.rng_seed = 909;
  run.n_trajectories = 32;

  const auto combo = QuadCombination::x_sum();
  const double engine = combination_variance(evaluate(run.chain, {}, 3.0), combo);
  REQUIRE(to_db_rel_snl(engine, combo.snl) == Approx(-3.0).margin(1e-3));

  const auto est = mc_correlation_spectrum(run, {combo}, {3.0}, 16000)[0][0];
  INFO("mc=" << est.value << " +- " << est.std_error << " engine=" << engine);
  REQUIRE(z_score(est, engine) < 3.0);
}

TEST_CASE("series dump") {
  const auto run = single_nopa_run(ring_rates(), 0.2, kPi, 0.0, 1e-3, 30.0, 11, 1);
  const QuadratureSeries series = simulate(run);
  const auto path = std::filesystem::temp_directory_path() / "nopa_series_test.csv";
  write_series_csv(series, run, path.string());

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("# quadrature series; seed=11", 0) == 0);
  std::getline(in, line);
  REQUIRE(line == "t_us,x1,y1,x2,y2");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == series.samples.size());
  std::filesystem::remove(path);

  REQUIRE_THROWS_AS(write_series_csv(series, run, "/nonexistent-dir/series.csv"),
                    std::runtime_error);
}
