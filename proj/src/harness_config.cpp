#include <cmath>
#include <fstream>
#include <sstream>

#include "flatmpc/errors.hpp"
#include "flatmpc/harness.hpp"

namespace flatmpc {

ExperimentConfig default_regulation_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::regulation;
  cfg.nmpc.horizon = 2.0;
  cfg.nmpc.bins = 20;
  cfg.nmpc.dt_ctrl = 0.15;
  cfg.duration = 6.0;
  cfg.out_dir = "out/regulation";
  return cfg;
}

ExperimentConfig default_lemniscate_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::lemniscate;
  cfg.nmpc.horizon = 0.5;
  cfg.nmpc.bins = 5;
  cfg.nmpc.refine.initial_nodes = 4;
  cfg.duration = 8.0 * M_PI;
  cfg.out_dir = "out/lemniscate";
  return cfg;
}

ExperimentConfig default_sweep_config() {
  ExperimentConfig cfg;
  cfg.kind = ExperimentConfig::Kind::runtime_sweep;
  cfg.sweep_samples = 500;
  // Fixed two-interval refined segment so the refinement overhead is the
  // same machinery at every horizon length.
  cfg.nmpc.refine.initial_nodes = 2;
  cfg.out_dir = "out/bench";
  return cfg;
}

namespace {

struct ConfigValue {
  std::string text;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, ConfigValue>;

struct RawConfig {
  std::string name;
  std::map<std::string, Section> sections;

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RawConfig parse_raw(std::istream& in, const std::string& name) {
  RawConfig raw;
  raw.name = name;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') raw.fail(line_no, "unterminated section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) raw.fail(line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) raw.fail(line_no, "expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) raw.fail(line_no, "empty key");
    if (section.empty()) raw.fail(line_no, "key '" + key + "' outside any [section]");
    raw.sections[section][key] = ConfigValue{value, line_no, false};
  }
  return raw;
}

class Reader {
 public:
  Reader(RawConfig& raw, const std::string& section) : raw_(raw), section_(section) {}

  bool has(const std::string& key) const {
    auto sec = raw_.sections.find(section_);
    return sec != raw_.sections.end() && sec->second.count(key) > 0;
  }

  ConfigValue& at(const std::string& key) {
    auto& v = raw_.sections[section_][key];
    v.used = true;
    return v;
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    auto& v = at(key);
    try {
      size_t pos = 0;
      const double d = std::stod(v.text, &pos);
      if (pos != v.text.size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      raw_.fail(v.line, "expected a number for '" + key + "', got '" + v.text + "'");
    }
  }

  int integer(const std::string& key, int fallback) {
    const double d = number(key, fallback);
    const int i = static_cast<int>(std::llround(d));
    if (std::abs(d - i) > 1e-12) {
      raw_.fail(at(key).line, "expected an integer for '" + key + "'");
    }
    return i;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    auto& v = at(key);
    if (v.text == "on" || v.text == "true" || v.text == "1") return true;
    if (v.text == "off" || v.text == "false" || v.text == "0") return false;
    raw_.fail(v.line, "expected on/off for '" + key + "', got '" + v.text + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return at(key).text;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    auto& v = at(key);
    std::istringstream ss(v.text);
    std::vector<double> out;
    double d;
    while (ss >> d) out.push_back(d);
    if (!ss.eof() || out.empty()) raw_.fail(v.line, "expected a number list for '" + key + "'");
    return out;
  }

 private:
  RawConfig& raw_;
  std::string section_;
};

}  // namespace

ExperimentConfig load_config(std::istream& in, const std::string& name) {
  RawConfig raw = parse_raw(in, name);

  ExperimentConfig cfg;
  {
    Reader r(raw, "experiment");
    const std::string kind = r.text("kind", "regulation");
    if (kind == "regulation") {
      cfg = default_regulation_config();
    } else if (kind == "lemniscate") {
      cfg = default_lemniscate_config();
    } else if (kind == "runtime_sweep") {
      cfg = default_sweep_config();
    } else if (r.has("kind")) {
      raw.fail(r.at("kind").line, "unknown experiment kind '" + kind + "'");
    }
    cfg.seed = static_cast<std::uint64_t>(r.number("seed", 0));
    cfg.out_dir = r.text("out", cfg.out_dir);
    cfg.duration = r.number("duration", cfg.duration);
    cfg.timings = r.flag("timings", cfg.timings);
  }
  {
    Reader r(raw, "vehicle");
    cfg.vehicle.mass = r.number("mass", cfg.vehicle.mass);
    cfg.vehicle.gravity = r.number("gravity", cfg.vehicle.gravity);
    if (r.has("inertia")) {
      const auto d = r.numbers("inertia", {});
      if (d.size() != 3) raw.fail(r.at("inertia").line, "inertia wants 3 diagonal entries");
      cfg.vehicle.inertia = Vector3(d[0], d[1], d[2]).asDiagonal();
    }
    if (cfg.vehicle.mass <= 0) throw ConfigError(name + ": vehicle mass must be positive");
    if (cfg.vehicle.gravity <= 0) throw ConfigError(name + ": gravity must be positive");
  }
  {
    Reader r(raw, "nmpc");
    cfg.nmpc.horizon = r.number("horizon", cfg.nmpc.horizon);
    cfg.nmpc.bins = r.integer("bins", cfg.nmpc.bins);
    cfg.nmpc.dt_ctrl = r.number("dt_ctrl", cfg.nmpc.dt_ctrl);
    cfg.nmpc.refine_enabled = r.flag("refine", cfg.nmpc.refine_enabled);
    cfg.nmpc.input_at_dt_ctrl = r.flag("input_at_dt_ctrl", cfg.nmpc.input_at_dt_ctrl);
    cfg.nmpc.hold_first_interval = r.flag("hold_first_interval", cfg.nmpc.hold_first_interval);
    cfg.nmpc.cold_start_factor = r.integer("cold_start_factor", cfg.nmpc.cold_start_factor);
  }
  {
    Reader r(raw, "weights");
    Eigen::Matrix<double, 12, 1> qd;
    const double qp = r.number("position", 10.0);
    const double qv = r.number("velocity", 1.0);
    const double qr = r.number("rotation", 5.0);
    const double qw = r.number("rate", 0.1);
    qd << qp, qp, qp, qv, qv, qv, qr, qr, qr, qw, qw, qw;
    cfg.nmpc.weights.q = qd.asDiagonal();
    const double rt = r.number("thrust", 0.001);
    const double rq = r.number("torque", 1.0);
    cfg.nmpc.weights.r_w = Eigen::Vector4d(rt, rq, rq, rq).asDiagonal();
    cfg.nmpc.weights.a_l = r.number("continuity", 100.0) * Eigen::Matrix<double, 12, 12>::Identity();
    cfg.nmpc.weights.anchor = r.number("anchor", 1e4);
  }
  {
    Reader r(raw, "solver");
    auto& s = cfg.nmpc.solver;
    s.max_iterations = r.integer("max_iterations", s.max_iterations);
    s.lambda0 = r.number("lambda0", s.lambda0);
    s.lambda_max = r.number("lambda_max", s.lambda_max);
    s.step_tol = r.number("step_tol", s.step_tol);
    s.cost_tol = r.number("cost_tol", s.cost_tol);
    s.fd_step = r.number("fd_step", s.fd_step);
    s.dense_threshold = r.integer("dense_threshold", s.dense_threshold);
  }
  {
    Reader r(raw, "refine");
    auto& m = cfg.nmpc.refine;
    m.err_threshold = r.number("err_threshold", m.err_threshold);
    m.max_passes = r.integer("max_passes", m.max_passes);
    m.initial_nodes = r.integer("initial_nodes", m.initial_nodes);
    m.max_added = r.integer("max_added", m.max_added);
    m.compare_order = r.integer("compare_order", m.compare_order);
  }
  {
    Reader r(raw, "regulation");
    if (r.has("goal")) {
      const auto g = r.numbers("goal", {});
      if (g.size() != 4) raw.fail(r.at("goal").line, "goal wants 4 entries: x y z yaw");
      cfg.goal_p = Vector3(g[0], g[1], g[2]);
      cfg.goal_yaw = g[3];
    }
    cfg.settle_tolerance = r.number("settle_tolerance", cfg.settle_tolerance);
    cfg.fail_distance = r.number("fail_distance", cfg.fail_distance);
  }
  {
    Reader r(raw, "noise");
    cfg.noise_pos = r.number("position", cfg.noise_pos);
    cfg.noise_vel = r.number("velocity", cfg.noise_vel);
    cfg.noise_rate = r.number("rate", cfg.noise_rate);
  }
  {
    Reader r(raw, "sweep");
    if (r.has("bins")) {
      cfg.sweep_bins.clear();
      for (double d : r.numbers("bins", {})) cfg.sweep_bins.push_back(static_cast<int>(std::llround(d)));
    }
    cfg.sweep_horizons = r.numbers("horizons", cfg.sweep_horizons);
    cfg.sweep_samples = r.integer("samples", cfg.sweep_samples);
    cfg.reference_bins = r.integer("reference_bins", cfg.reference_bins);
    if (cfg.sweep_bins.empty() || cfg.sweep_horizons.empty()) {
      throw ConfigError(name + ": sweep lists must be non-empty");
    }
  }

  for (const auto& [sec_name, sec] : raw.sections) {
    for (const auto& [key, value] : sec) {
      if (!value.used) {
        raw.fail(value.line, "unknown option '" + key + "' in [" + sec_name + "]");
      }
    }
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return load_config(in, path);
}

}  // namespace flatmpc
