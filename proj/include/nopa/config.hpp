#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nopa/cavity.hpp"
#include "nopa/langevin.hpp"

// Line-oriented "[section]" / "key = value" configuration format for sweep,
// calibration and oracle runs. Parsing fails closed: unknown sections or
// keys are errors, reported with their line number.

namespace nopa {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message
                                    : "config: " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class SourceKind { kVacuum, kEpr };

struct SourceSpec {
  SourceKind kind = SourceKind::kVacuum;
  double squeezing_db = 0.0;
  // Defaults to the minimum-uncertainty partner of squeezing_db.
  std::optional<double> antisqueezing_db;
};

enum class ElementKind { kNopa, kLoss, kPhase };

struct NopaSpec {
  CavityGeometry geometry;
  double sigma = 0.0;
  double pump_phase = 0.0;
  double detuning_mhz = 0.0;
};

struct LossSpec {
  double efficiency_1 = 1.0;
  double efficiency_2 = 1.0;
};

struct PhaseSpec {
  double angle_1 = 0.0;
  double angle_2 = 0.0;
};

struct ElementSpec {
  std::string id;
  ElementKind kind = ElementKind::kLoss;
  NopaSpec nopa;
  LossSpec loss;
  PhaseSpec phase;
};

enum class SweepKind { kDetuning, kFrequency };

struct SweepSpec {
  SweepKind kind = SweepKind::kDetuning;
  std::string element_id;  // detuning sweeps only
  double min_mhz = -15.0;
  double max_mhz = 15.0;
  int points = 601;
  double analysis_frequency_mhz = 3.0;
};

struct OracleSpec {
  bool enabled = false;
  std::uint64_t seed = 1;
  int trajectories = 32;
  double duration_us = 0.0;   // 0 = derive from the chain's slowest rate
  double time_step_us = 0.0;  // 0 = derive from the chain's fastest rate
  double segment_us = 0.0;    // 0 = duration / 12
  SpectralWindow window = SpectralWindow::kHann;
};

struct FreeParameter {
  std::string path;  // "<element id>.<field>" or "detection.efficiency"
  double lower = 0.0;
  double upper = 1.0;
};

enum class TargetPoint { kResonance, kFar, kDelta };

struct TargetSpec {
  std::string observable;  // xsum_db | ydiff_db | xdiff_db | ysum_db
  TargetPoint point = TargetPoint::kResonance;
  double delta_mhz = 0.0;  // TargetPoint::kDelta only
  double target_db = 0.0;
  double tolerance_db = 0.1;
};

struct CalibrationSpec {
  std::vector<FreeParameter> free_parameters;
  std::vector<TargetSpec> targets;
  double far_detuning_mhz = 60.0;
  int max_iterations = 4000;
};

struct SweepConfig {
  SourceSpec source;
  std::vector<ElementSpec> elements;
  double detection_efficiency = 1.0;
  SweepSpec sweep;
  std::string output_path;
  OracleSpec oracle;
  std::optional<CalibrationSpec> calibration;

  std::size_t element_index(const std::string& id) const {
    for (std::size_t i = 0; i < elements.size(); ++i) {
      if (elements[i].id == id) return i;
    }
    throw ConfigError(0, "unknown element id '" + id + "'");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_number(const std::string& value, int line) {
  if (value == "pi") return std::numbers::pi;
  if (value == "-pi") return -std::numbers::pi;
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(line, "expected a number, got '" + value + "'");
  }
}

inline bool parse_bool(const std::string& value, int line) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError(line, "expected a boolean, got '" + value + "'");
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct RawSection {
  std::string name;   // first word
  std::string label;  // optional second word (element id)
  int line = 0;
  std::vector<std::tuple<std::string, std::string, int>> entries;  // key, value, line
};

inline std::vector<RawSection> tokenize(const std::string& text) {
  std::vector<RawSection> sections;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto pos = raw.find('#'); pos != std::string::npos) raw.erase(pos);
    const std::string s = trim(raw);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "unterminated section header");
      const auto words = split_ws(trim(s.substr(1, s.size() - 2)));
      if (words.empty() || words.size() > 2) throw ConfigError(line, "malformed section header");
      RawSection sec;
      sec.name = words[0];
      if (words.size() == 2) sec.label = words[1];
      sec.line = line;
      sections.push_back(std::move(sec));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    if (sections.empty()) throw ConfigError(line, "entry before any [section]");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(line, "empty key or value");
    sections.back().entries.emplace_back(key, value, line);
  }
  return sections;
}

// Tracks which keys were consumed so leftovers can be rejected.
class SectionReader {
 public:
  explicit SectionReader(const RawSection& sec) : sec_(sec), used_(sec.entries.size(), false) {}

  std::optional<std::pair<std::string, int>> take(const std::string& key) {
    std::optional<std::pair<std::string, int>> found;
    for (std::size_t i = 0; i < sec_.entries.size(); ++i) {
      const auto& [k, v, line] = sec_.entries[i];
      if (k != key) continue;
      if (found) throw ConfigError(line, "duplicate key '" + key + "'");
      found = {v, line};
      used_[i] = true;
    }
    return found;
  }

  std::pair<std::string, int> require(const std::string& key) const {
    for (std::size_t i = 0; i < sec_.entries.size(); ++i) {
      const auto& [k, v, line] = sec_.entries[i];
      if (k == key) return {v, line};
    }
    throw ConfigError(sec_.line, "section [" + sec_.name + "] is missing key '" + key + "'");
  }

  std::vector<std::pair<std::string, int>> take_all(const std::string& key) {
    std::vector<std::pair<std::string, int>> out;
    for (std::size_t i = 0; i < sec_.entries.size(); ++i) {
      const auto& [k, v, line] = sec_.entries[i];
      if (k != key) continue;
      out.emplace_back(v, line);
      used_[i] = true;
    }
    return out;
  }

  void mark_required_used(const std::string& key) {
    for (std::size_t i = 0; i < sec_.entries.size(); ++i) {
      if (std::get<0>(sec_.entries[i]) == key) used_[i] = true;
    }
  }

  void reject_leftovers() const {
    for (std::size_t i = 0; i < sec_.entries.size(); ++i) {
      if (!used_[i]) {
        throw ConfigError(std::get<2>(sec_.entries[i]),
                          "unknown key '" + std::get<0>(sec_.entries[i]) + "' in section [" +
                              sec_.name + "]");
      }
    }
  }

 private:
  const RawSection& sec_;
  std::vector<bool> used_;
};

inline NopaSpec parse_nopa_section(const RawSection& sec) {
  SectionReader r(sec);
  NopaSpec spec;

  const auto [topo, topo_line] = r.require("topology");
  r.mark_required_used("topology");
  if (topo == "linear") {
    spec.geometry.topology = CavityTopology::kLinear;
  } else if (topo == "ring") {
    spec.geometry.topology = CavityTopology::kRing;
  } else {
    throw ConfigError(topo_line, "topology must be 'linear' or 'ring'");
  }
  const auto need = [&](const char* key) {
    const auto [v, line] = r.require(key);
    r.mark_required_used(key);
    return parse_number(v, line);
  };
  spec.geometry.geometric_length_m = need("geometric_length_m");
  spec.geometry.crystal_length_m = need("crystal_length_m");
  spec.geometry.crystal_index = need("crystal_index");
  spec.geometry.coupler_transmission = need("coupler_transmission");
  spec.geometry.finesse = need("finesse");

  const auto sigma = r.take("sigma");
  const auto pump = r.take("pump_power_mw");
  const auto threshold = r.take("threshold_power_mw");
  if (sigma && (pump || threshold)) {
    throw ConfigError(sigma->second, "give either sigma or pump/threshold powers, not both");
  }
  if (sigma) {
    spec.sigma = parse_number(sigma->first, sigma->second);
    if (spec.sigma < 0.0 || spec.sigma >= 1.0) {
      throw ConfigError(sigma->second, "sigma out of range: below threshold required");
    }
  } else if (pump && threshold) {
    try {
      spec.sigma = pump_amplitude(parse_number(pump->first, pump->second),
                                  parse_number(threshold->first, threshold->second));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(pump->second, e.what());
    }
  } else {
    throw ConfigError(sec.line, "NOPA needs sigma or pump_power_mw + threshold_power_mw");
  }

  if (const auto phase = r.take("pump_phase")) {
    spec.pump_phase = parse_number(phase->first, phase->second);
  }
  if (const auto det = r.take("detuning_mhz")) {
    spec.detuning_mhz = parse_number(det->first, det->second);
  }
  r.reject_leftovers();
  return spec;
}

inline LossSpec parse_loss_section(const RawSection& sec) {
  SectionReader r(sec);
  LossSpec spec;
  const auto common = r.take("efficiency");
  const auto e1 = r.take("efficiency_1");
  const auto e2 = r.take("efficiency_2");
  if (common && (e1 || e2)) {
    throw ConfigError(common->second, "give either efficiency or per-mode efficiencies");
  }
  if (common) {
    spec.efficiency_1 = spec.efficiency_2 = parse_number(common->first, common->second);
  } else if (e1 && e2) {
    spec.efficiency_1 = parse_number(e1->first, e1->second);
    spec.efficiency_2 = parse_number(e2->first, e2->second);
  } else {
    throw ConfigError(sec.line, "loss needs efficiency or efficiency_1 + efficiency_2");
  }
  for (double eta : {spec.efficiency_1, spec.efficiency_2}) {
    if (eta < 0.0 || eta > 1.0) {
      throw ConfigError(sec.line, "loss efficiency must lie in [0,1]");
    }
  }
  r.reject_leftovers();
  return spec;
}

inline PhaseSpec parse_phase_section(const RawSection& sec) {
  SectionReader r(sec);
  PhaseSpec spec;
  const auto common = r.take("angle_rad");
  const auto a1 = r.take("angle_1_rad");
  const auto a2 = r.take("angle_2_rad");
  if (common && (a1 || a2)) {
    throw ConfigError(common->second, "give either angle_rad or per-mode angles");
  }
  if (common) {
    spec.angle_1 = spec.angle_2 = parse_number(common->first, common->second);
  } else if (a1 || a2) {
    if (a1) spec.angle_1 = parse_number(a1->first, a1->second);
    if (a2) spec.angle_2 = parse_number(a2->first, a2->second);
  } else {
    throw ConfigError(sec.line, "phase needs angle_rad or per-mode angles");
  }
  r.reject_leftovers();
  return spec;
}

inline TargetSpec parse_target(const std::string& value, int line) {
  // <observable> <resonance|far|delta:<mhz>> <target_db> [tolerance_db]
  const auto tok = split_ws(value);
  if (tok.size() < 3 || tok.size() > 4) {
    throw ConfigError(line, "target needs: observable point target_db [tolerance_db]");
  }
  TargetSpec t;
  t.observable = tok[0];
  static const char* known[] = {"xsum_db", "ydiff_db", "xdiff_db", "ysum_db"};
  bool ok = false;
  for (const char* k : known) ok = ok || (t.observable == k);
  if (!ok) throw ConfigError(line, "unknown target observable '" + t.observable + "'");
  if (tok[1] == "resonance") {
    t.point = TargetPoint::kResonance;
  } else if (tok[1] == "far") {
    t.point = TargetPoint::kFar;
  } else if (tok[1].rfind("delta:", 0) == 0) {
    t.point = TargetPoint::kDelta;
    t.delta_mhz = parse_number(tok[1].substr(6), line);
  } else {
    throw ConfigError(line, "target point must be resonance, far or delta:<mhz>");
  }
  t.target_db = parse_number(tok[2], line);
  if (tok.size() == 4) {
    t.tolerance_db = parse_number(tok[3], line);
    if (t.tolerance_db <= 0.0) throw ConfigError(line, "target tolerance must be positive");
  }
  return t;
}

inline FreeParameter parse_free(const std::string& value, int line) {
  // <path> <lower> <upper>
  const auto tok = split_ws(value);
  if (tok.size() != 3) throw ConfigError(line, "free needs: path lower upper");
  FreeParameter p;
  p.path = tok[0];
  p.lower = parse_number(tok[1], line);
  p.upper = parse_number(tok[2], line);
  if (!(p.lower < p.upper)) throw ConfigError(line, "free parameter bounds must satisfy lower < upper");
  return p;
}

}  // namespace detail

inline SweepConfig parse_config(const std::string& text) {
  using detail::RawSection;
  using detail::SectionReader;

  SweepConfig cfg;
  bool saw_sweep = false;
  const auto sections = detail::tokenize(text);

  for (const RawSection& sec : sections) {
    if (sec.name == "source") {
      SectionReader r(sec);
      const auto [kind, kind_line] = r.require("kind");
      r.mark_required_used("kind");
      if (kind == "vacuum") {
        cfg.source.kind = SourceKind::kVacuum;
      } else if (kind == "epr") {
        cfg.source.kind = SourceKind::kEpr;
        const auto [sq, sq_line] = r.require("squeezing_db");
        r.mark_required_used("squeezing_db");
        cfg.source.squeezing_db = detail::parse_number(sq, sq_line);
        if (const auto anti = r.take("antisqueezing_db")) {
          cfg.source.antisqueezing_db = detail::parse_number(anti->first, anti->second);
        }
      } else {
        throw ConfigError(kind_line, "source kind must be 'vacuum' or 'epr'");
      }
      r.reject_leftovers();
    } else if (sec.name == "nopa" || sec.name == "loss" || sec.name == "phase") {
      if (sec.label.empty()) {
        throw ConfigError(sec.line, "[" + sec.name + "] needs an id, e.g. [" + sec.name + " n1]");
      }
      for (const auto& e : cfg.elements) {
        if (e.id == sec.label) throw ConfigError(sec.line, "duplicate element id '" + sec.label + "'");
      }
      ElementSpec e;
      e.id = sec.label;
      if (sec.name == "nopa") {
        e.kind = ElementKind::kNopa;
        e.nopa = detail::parse_nopa_section(sec);
      } else if (sec.name == "loss") {
        e.kind = ElementKind::kLoss;
        e.loss = detail::parse_loss_section(sec);
      } else {
        e.kind = ElementKind::kPhase;
        e.phase = detail::parse_phase_section(sec);
      }
      cfg.elements.push_back(std::move(e));
    } else if (sec.name == "detection") {
      SectionReader r(sec);
      const auto [v, line] = r.require("efficiency");
      r.mark_required_used("efficiency");
      cfg.detection_efficiency = detail::parse_number(v, line);
      if (cfg.detection_efficiency <= 0.0 || cfg.detection_efficiency > 1.0) {
        throw ConfigError(line, "detection efficiency must lie in (0,1]");
      }
      r.reject_leftovers();
    } else if (sec.name == "sweep") {
      saw_sweep = true;
      SectionReader r(sec);
      const auto [kind, kind_line] = r.require("kind");
      r.mark_required_used("kind");
      if (kind == "detuning") {
        cfg.sweep.kind = SweepKind::kDetuning;
        const auto [el, el_line] = r.require("element");
        r.mark_required_used("element");
        cfg.sweep.element_id = el;
        (void)el_line;
      } else if (kind == "frequency") {
        cfg.sweep.kind = SweepKind::kFrequency;
      } else {
        throw ConfigError(kind_line, "sweep kind must be 'detuning' or 'frequency'");
      }
      const auto [mn, mn_line] = r.require("min_mhz");
      r.mark_required_used("min_mhz");
      const auto [mx, mx_line] = r.require("max_mhz");
      r.mark_required_used("max_mhz");
      cfg.sweep.min_mhz = detail::parse_number(mn, mn_line);
      cfg.sweep.max_mhz = detail::parse_number(mx, mx_line);
      if (!std::isfinite(cfg.sweep.min_mhz) || !std::isfinite(cfg.sweep.max_mhz) ||
          !(cfg.sweep.min_mhz < cfg.sweep.max_mhz)) {
        throw ConfigError(mn_line, "sweep range must be finite with min < max");
      }
      if (const auto pts = r.take("points")) {
        cfg.sweep.points = static_cast<int>(detail::parse_number(pts->first, pts->second));
      }
      if (cfg.sweep.points < 2) throw ConfigError(sec.line, "sweep needs at least 2 points");
      if (const auto f = r.take("analysis_frequency_mhz")) {
        cfg.sweep.analysis_frequency_mhz = detail::parse_number(f->first, f->second);
      }
      r.reject_leftovers();
    } else if (sec.name == "output") {
      SectionReader r(sec);
      const auto [v, line] = r.require("path");
      r.mark_required_used("path");
      (void)line;
      cfg.output_path = v;
      r.reject_leftovers();
    } else if (sec.name == "oracle") {
      SectionReader r(sec);
      if (const auto v = r.take("enabled")) {
        cfg.oracle.enabled = detail::parse_bool(v->first, v->second);
      }
      if (const auto v = r.take("seed")) {
        cfg.oracle.seed = static_cast<std::uint64_t>(detail::parse_number(v->first, v->second));
      }
      if (const auto v = r.take("trajectories")) {
        cfg.oracle.trajectories = static_cast<int>(detail::parse_number(v->first, v->second));
        if (cfg.oracle.trajectories < 1) throw ConfigError(v->second, "trajectories must be >= 1");
      }
      if (const auto v = r.take("duration_us")) {
        cfg.oracle.duration_us = detail::parse_number(v->first, v->second);
      }
      if (const auto v = r.take("time_step_us")) {
        cfg.oracle.time_step_us = detail::parse_number(v->first, v->second);
      }
      if (const auto v = r.take("segment_us")) {
        cfg.oracle.segment_us = detail::parse_number(v->first, v->second);
      }
      if (const auto v = r.take("window")) {
        if (v->first == "rect") {
          cfg.oracle.window = SpectralWindow::kRect;
        } else if (v->first == "hann") {
          cfg.oracle.window = SpectralWindow::kHann;
        } else {
          throw ConfigError(v->second, "window must be 'rect' or 'hann'");
        }
      }
      r.reject_leftovers();
    } else if (sec.name == "calibrate") {
      SectionReader r(sec);
      CalibrationSpec cal;
      for (const auto& [v, line] : r.take_all("free")) {
        cal.free_parameters.push_back(detail::parse_free(v, line));
      }
      for (const auto& [v, line] : r.take_all("target")) {
        cal.targets.push_back(detail::parse_target(v, line));
      }
      if (const auto v = r.take("far_detuning_mhz")) {
        cal.far_detuning_mhz = detail::parse_number(v->first, v->second);
      }
      if (const auto v = r.take("max_iterations")) {
        cal.max_iterations = static_cast<int>(detail::parse_number(v->first, v->second));
      }
      if (cal.targets.empty()) throw ConfigError(sec.line, "[calibrate] needs at least one target");
      if (cal.free_parameters.empty()) {
        throw ConfigError(sec.line, "[calibrate] needs at least one free parameter");
      }
      if (cal.free_parameters.size() > cal.targets.size()) {
        throw ConfigError(sec.line, "more free parameters than targets");
      }
      r.reject_leftovers();
      cfg.calibration = std::move(cal);
    } else {
      throw ConfigError(sec.line, "unknown section [" + sec.name + "]");
    }
  }

  if (!saw_sweep) throw ConfigError(0, "missing required [sweep] section");
  if (cfg.sweep.kind == SweepKind::kDetuning) {
    bool found = false;
    for (const auto& e : cfg.elements) {
      if (e.id == cfg.sweep.element_id) {
        if (e.kind != ElementKind::kNopa) {
          throw ConfigError(0, "sweep element '" + cfg.sweep.element_id + "' is not a NOPA");
        }
        found = true;
      }
    }
    if (!found) {
      throw ConfigError(0, "sweep references unknown element '" + cfg.sweep.element_id + "'");
    }
  }
  return cfg;
}

inline SweepConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::ios_base::failure("cannot read config file '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace nopa
