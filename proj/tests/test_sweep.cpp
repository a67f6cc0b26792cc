#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nopa/sweep.hpp"

using namespace nopa;
using Catch::Approx;

namespace {

std::string config_dir() { return NOPA_CONFIG_DIR; }

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<double> split_csv_row(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

const SweepRow& row_at(const SweepResult& r, double x) {
  for (const auto& row : r.rows) {
    if (std::abs(row.sweep_var - x) < 1e-9) return row;
  }
  FAIL("no row at sweep_var " << x);
  return r.rows.front();
}

}  // namespace

TEST_CASE("parameter paths") {
  SweepConfig cfg = load_config(config_dir() + "/fig2.cfg");
  REQUIRE(get_parameter(cfg, "nopa2.sigma") == Approx(0.27807814));
  set_parameter(cfg, "nopa2.sigma", 0.5);
  REQUIRE(get_parameter(cfg, "nopa2.sigma") == 0.5);
  set_parameter(cfg, "detection.efficiency", 0.9);
  REQUIRE(cfg.detection_efficiency == 0.9);
  set_parameter(cfg, "nopa1.pump_phase", 0.25);
  REQUIRE(cfg.elements[0].nopa.pump_phase == 0.25);
  REQUIRE_THROWS_AS(set_parameter(cfg, "nopa2.bogus", 1.0), ConfigError);
  REQUIRE_THROWS_AS(set_parameter(cfg, "missing.sigma", 1.0), ConfigError);
  REQUIRE_THROWS_AS(get_parameter(cfg, "nonsense"), ConfigError);
}

TEST_CASE("detuning sweep of the shipped cascade") {
  const SweepConfig cfg = load_config(config_dir() + "/fig2.cfg");
  const SweepResult result = run_detuning_sweep(cfg);
  REQUIRE(result.rows.size() == 601);

  SECTION("rows ascend in detuning") {
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
      REQUIRE(result.rows[i].sweep_var > result.rows[i - 1].sweep_var);
    }
  }

  SECTION("spectra are symmetric about resonance") {
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const auto& a = result.rows[i];
      const auto& b = result.rows[result.rows.size() - 1 - i];
      REQUIRE(a.sweep_var == Approx(-b.sweep_var).margin(1e-12));
      REQUIRE(a.report.v_xsum_db == Approx(b.report.v_xsum_db).margin(1e-9));
      REQUIRE(a.report.v_ydiff_db == Approx(b.report.v_ydiff_db).margin(1e-9));
      REQUIRE(a.report.v_xdiff_db == Approx(b.report.v_xdiff_db).margin(1e-9));
      REQUIRE(a.report.v_ysum_db == Approx(b.report.v_ysum_db).margin(1e-9));
    }
  }

  SECTION("trace landmarks") {
    REQUIRE(row_at(result, 0.0).report.v_xsum_db == Approx(-3.000000001).margin(1e-6));
    REQUIRE(row_at(result, 3.55).report.v_xsum_db == Approx(2.194680806).margin(1e-6));
    // the shoulder is the on-grid maximum
    double best = -100.0, best_pos = 0.0;
    for (const auto& row : result.rows) {
      if (row.sweep_var > 0 && row.report.v_xsum_db > best) {
        best = row.report.v_xsum_db;
        best_pos = row.sweep_var;
      }
    }
    REQUIRE(best_pos == Approx(3.55).margin(1e-9));
    const auto far = correlation_report(evaluate_config(cfg, 60.0, 3.0));
    REQUIRE(far.v_xsum_db == Approx(-2.400000011).margin(1e-6));
  }
}

TEST_CASE("detuning sweep of the amplifying configuration") {
  const SweepConfig cfg = load_config(config_dir() + "/fig3.cfg");
  const SweepResult result = run_detuning_sweep(cfg);

  REQUIRE(row_at(result, 0.0).report.v_xdiff_db == Approx(1.445910984).margin(1e-6));
  REQUIRE(row_at(result, 3.05).report.v_xdiff_db == Approx(-1.585992951).margin(1e-6));
  double best = 100.0, best_pos = 0.0;
  for (const auto& row : result.rows) {
    if (row.sweep_var > 0 && row.report.v_xdiff_db < best) {
      best = row.report.v_xdiff_db;
      best_pos = row.sweep_var;
    }
  }
  REQUIRE(best_pos == Approx(3.05).margin(1e-9));
  const auto far = correlation_report(evaluate_config(cfg, 60.0, 3.0));
  REQUIRE(far.v_xdiff_db == Approx(2.722370265).margin(1e-6));
}

TEST_CASE("inert manipulation cavity leaves the trace flat") {
  // A lossless coupler (finesse exactly 2 pi / T) keeps the passive cavity
  // all-pass, so with sigma = 0 every detuning returns the source level.
  SweepConfig cfg = parse_config(R"(
[source]
kind = epr
squeezing_db = -2.4

[nopa n2]
topology = ring
geometric_length_m = 0.557
crystal_length_m = 0.010
crystal_index = 1.83
coupler_transmission = 0.035
finesse = 179.519580205131
sigma = 0.0
pump_phase = pi

[sweep]
kind = detuning
element = n2
min_mhz = -15
max_mhz = 15
points = 61
)");
  const SweepResult result = run_detuning_sweep(cfg);
  for (const auto& row : result.rows) {
    REQUIRE(row.report.v_xsum_db == Approx(-2.4).margin(1e-9));
    REQUIRE(row.report.v_ysum_db == Approx(2.4).margin(1e-9));
  }
}

TEST_CASE("frequency sweep") {
  const SweepConfig cfg = load_config(config_dir() + "/nopa1.cfg");
  const SweepResult result = run_frequency_sweep(cfg);
  REQUIRE(result.rows.size() == 149);

  SECTION("squeezing degrades with analysis frequency") {
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
      REQUIRE(result.rows[i].report.v_xsum_db > result.rows[i - 1].report.v_xsum_db);
    }
    REQUIRE(result.rows.front().report.v_xsum_db < -2.4);
  }

  SECTION("matches a direct evaluation at the calibration point") {
    const auto direct = correlation_report(evaluate_config(cfg, std::nullopt, 3.0));
    REQUIRE(direct.v_xsum_db == Approx(-2.4).margin(1e-6));
  }

  SECTION("squeezing vanishes far outside the cavity bandwidth") {
    const auto far = correlation_report(evaluate_config(cfg, std::nullopt, 2000.0));
    REQUIRE(std::abs(far.v_xsum_db) < 1e-3);
  }

  SECTION("kind mismatch is rejected") {
    REQUIRE_THROWS_AS(run_detuning_sweep(cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(run_frequency_sweep(load_config(config_dir() + "/fig2.cfg")),
                      std::invalid_argument);
  }
}

TEST_CASE("csv output") {
  const auto path = std::filesystem::temp_directory_path() / "nopa_sweep_test.csv";

  SECTION("empty result is a header-only file") {
    emit_csv(SweepResult{}, path.string());
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 1);
    REQUIRE(lines[0] == "sweep_var,v_xsum_db,v_ydiff_db,v_xdiff_db,v_ysum_db,duan_plus,duan_minus");
  }

  SECTION("three rows make a four-line file with fixed formatting") {
    SweepResult r;
    for (double x : {-1.0, 0.0, 1.0}) {
      SweepRow row;
      row.sweep_var = x;
      row.report.v_xsum_db = -3.0;
      row.report.duan_plus = 2.0047489345;
      r.rows.push_back(row);
    }
    emit_csv(r, path.string());
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 4);
    REQUIRE(lines[1] == "-1.000000,-3.000000,0.000000,0.000000,0.000000,2.004749,0.000000");
  }

  SECTION("round trip recovers printed precision and stays LF-terminated") {
    SweepConfig cfg = load_config(config_dir() + "/fig2.cfg");
    cfg.sweep.points = 21;
    const SweepResult result = run_detuning_sweep(cfg);
    emit_csv(result, path.string());

    std::ifstream raw(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
    REQUIRE(blob.find('\r') == std::string::npos);
    REQUIRE(blob.back() == '\n');

    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 22);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto cells = split_csv_row(lines[i]);
      REQUIRE(cells.size() == 7);
      const auto& row = result.rows[i - 1];
      REQUIRE(cells[0] == Approx(row.sweep_var).margin(5e-7));
      REQUIRE(cells[1] == Approx(row.report.v_xsum_db).margin(5e-7));
      REQUIRE(cells[5] == Approx(row.report.duan_plus).margin(5e-7));
    }
  }

  SECTION("unwritable path raises an I/O failure") {
    REQUIRE_THROWS_AS(emit_csv(SweepResult{}, "/nonexistent-dir/out.csv"),
                      std::ios_base::failure);
  }

  std::filesystem::remove(path);
}
