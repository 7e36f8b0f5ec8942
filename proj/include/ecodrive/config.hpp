#pragma once

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ecodrive/mpc.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RunMode { Optimal, Baseline, Ablation };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Optimal: return "optimal";
    case RunMode::Baseline: return "baseline";
    case RunMode::Ablation: return "ablation";
  }
  return "?";
}

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "optimal") return RunMode::Optimal;
  if (s == "baseline") return RunMode::Baseline;
  if (s == "ablation") return RunMode::Ablation;
  throw ConfigError("unknown mode '" + s + "' (expected optimal, baseline or ablation)");
}

/// Everything a run needs. Drag enters as C_D, rho_a and A; k_w follows.
struct RunConfig {
  std::string scenario;  // trajectory CSV
  std::string signals;   // optional, defaults next to the scenario
  std::string grade;     // optional
  std::string out = "out";
  RunMode mode = RunMode::Optimal;

  VehicleParams vehicle;
  BatteryParams battery;
  MotorSpec front = default_front_im();
  MotorSpec rear = default_rear_pmsm();
  int poly_degree = 5;
  MpcConfig mpc;
  CorridorConfig corridor;

  [[nodiscard]] EvModel model() const {
    EvModel m{vehicle, battery, Powertrain::build(front, rear, poly_degree)};
    m.validate();
    return m;
  }

  void validate() const {
    vehicle.validate();
    battery.validate();
    front.validate();
    rear.validate();
    if (poly_degree < 1 || poly_degree > PowerPolynomial::kMaxDegree)
      throw ConfigError("powertrain.degree out of range");
    mpc.validate();
    corridor.validate();
  }
};

namespace detail {

/// One configurable value: a reference into a RunConfig, typed.
using ConfigRef = std::variant<double*, int*, std::uint64_t*, bool*, std::string*>;

struct ConfigKey {
  std::string section;
  std::string key;
  std::function<ConfigRef(RunConfig&)> ref;
};

inline std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> k;
  const auto add = [&](std::string s, std::string key, std::function<ConfigRef(RunConfig&)> f) {
    k.push_back({std::move(s), std::move(key), std::move(f)});
  };
  add("run", "scenario", [](RunConfig& c) { return &c.scenario; });
  add("run", "signals", [](RunConfig& c) { return &c.signals; });
  add("run", "grade", [](RunConfig& c) { return &c.grade; });
  add("run", "out", [](RunConfig& c) { return &c.out; });

  add("vehicle", "m", [](RunConfig& c) { return &c.vehicle.m; });
  add("vehicle", "g", [](RunConfig& c) { return &c.vehicle.g; });
  add("vehicle", "C_D", [](RunConfig& c) { return &c.vehicle.C_D; });
  add("vehicle", "rho_a", [](RunConfig& c) { return &c.vehicle.rho_a; });
  add("vehicle", "A", [](RunConfig& c) { return &c.vehicle.A; });
  add("vehicle", "mu_r", [](RunConfig& c) { return &c.vehicle.mu_r; });
  add("vehicle", "n", [](RunConfig& c) { return &c.vehicle.n; });
  add("vehicle", "F_b_max", [](RunConfig& c) { return &c.vehicle.F_b_max; });
  add("vehicle", "a_min", [](RunConfig& c) { return &c.vehicle.a_min; });
  add("vehicle", "a_max", [](RunConfig& c) { return &c.vehicle.a_max; });
  add("vehicle", "v_max", [](RunConfig& c) { return &c.vehicle.v_max; });
  add("vehicle", "j_max", [](RunConfig& c) { return &c.vehicle.j_max; });
  add("vehicle", "dT_max", [](RunConfig& c) { return &c.vehicle.dT_max; });
  add("vehicle", "omega_max", [](RunConfig& c) { return &c.vehicle.omega_max; });

  add("battery", "U_oc", [](RunConfig& c) { return &c.battery.U_oc; });
  add("battery", "R_b", [](RunConfig& c) { return &c.battery.R_b; });
  add("battery", "C_bat", [](RunConfig& c) { return &c.battery.C_bat; });
  add("battery", "soc_min", [](RunConfig& c) { return &c.battery.soc_min; });
  add("battery", "soc_max", [](RunConfig& c) { return &c.battery.soc_max; });

  add("powertrain", "degree", [](RunConfig& c) { return &c.poly_degree; });
  for (const char* side : {"front", "rear"}) {
    const std::string s = std::string("motor.") + side;
    const bool f = std::string(side) == "front";
    const auto motor = [f](RunConfig& c) -> MotorSpec& { return f ? c.front : c.rear; };
    add(s, "T_stall", [motor](RunConfig& c) { return &motor(c).T_stall; });
    add(s, "P_rated", [motor](RunConfig& c) { return &motor(c).P_rated; });
    add(s, "omega_max", [motor](RunConfig& c) { return &motor(c).omega_max; });
    add(s, "omega_step", [motor](RunConfig& c) { return &motor(c).omega_step; });
    add(s, "torque_step", [motor](RunConfig& c) { return &motor(c).torque_step; });
    add(s, "loss_c0", [motor](RunConfig& c) { return &motor(c).loss.c0; });
    add(s, "loss_c1", [motor](RunConfig& c) { return &motor(c).loss.c1; });
    add(s, "loss_c2", [motor](RunConfig& c) { return &motor(c).loss.c2; });
    add(s, "loss_c3", [motor](RunConfig& c) { return &motor(c).loss.c3; });
    add(s, "loss_c4", [motor](RunConfig& c) { return &motor(c).loss.c4; });
  }

  add("ocp", "w1", [](RunConfig& c) { return &c.mpc.ocp.w.w1; });
  add("ocp", "w2", [](RunConfig& c) { return &c.mpc.ocp.w.w2; });
  add("ocp", "w3", [](RunConfig& c) { return &c.mpc.ocp.w.w3; });
  add("ocp", "w4", [](RunConfig& c) { return &c.mpc.ocp.w.w4; });
  add("ocp", "w5", [](RunConfig& c) { return &c.mpc.ocp.w.w5; });
  add("ocp", "w6", [](RunConfig& c) { return &c.mpc.ocp.w.w6; });
  add("ocp", "h_head", [](RunConfig& c) { return &c.mpc.ocp.h_head; });
  add("ocp", "h_min", [](RunConfig& c) { return &c.mpc.ocp.h_min; });
  add("ocp", "d_max", [](RunConfig& c) { return &c.mpc.ocp.d_max; });
  add("ocp", "d_min", [](RunConfig& c) { return &c.mpc.ocp.d_min; });
  add("ocp", "terminal_gap", [](RunConfig& c) { return &c.mpc.ocp.terminal_gap; });
  add("ocp", "terminal_speed", [](RunConfig& c) { return &c.mpc.ocp.terminal_speed; });
  add("ocp", "signal_stop_margin", [](RunConfig& c) { return &c.mpc.ocp.signal_stop_margin; });
  add("ocp", "signal_pass_clearance", [](RunConfig& c) { return &c.mpc.ocp.signal_pass_clearance; });
  add("ocp", "power_limit_fraction", [](RunConfig& c) { return &c.mpc.ocp.power_limit_fraction; });
  add("ocp", "slack_near_max", [](RunConfig& c) { return &c.mpc.ocp.slack_near_max; });

  add("mpc", "horizon", [](RunConfig& c) { return &c.mpc.horizon; });
  add("mpc", "update", [](RunConfig& c) { return &c.mpc.update; });
  add("mpc", "dt", [](RunConfig& c) { return &c.mpc.dt; });
  add("mpc", "seed", [](RunConfig& c) { return &c.mpc.seed; });
  add("mpc", "initial_gap", [](RunConfig& c) { return &c.mpc.initial_gap; });
  add("mpc", "soc0", [](RunConfig& c) { return &c.mpc.soc0; });
  add("mpc", "warm_start", [](RunConfig& c) { return &c.mpc.warm_start; });
  add("mpc", "safety_filter", [](RunConfig& c) { return &c.mpc.safety_filter; });
  add("mpc", "lead_decel", [](RunConfig& c) { return &c.mpc.lead_decel; });

  add("noise", "sigma", [](RunConfig& c) { return &c.mpc.noise.sigma; });
  add("noise", "mu", [](RunConfig& c) { return &c.mpc.noise.mu; });
  add("noise", "P_s", [](RunConfig& c) { return &c.mpc.noise.P_s; });
  add("noise", "gaussian_first", [](RunConfig& c) { return &c.mpc.noise.gaussian_first; });

  add("solver", "max_iter", [](RunConfig& c) { return &c.mpc.solver.max_iter; });
  add("solver", "kkt_tol", [](RunConfig& c) { return &c.mpc.solver.kkt_tol; });
  add("solver", "constraint_tol", [](RunConfig& c) { return &c.mpc.solver.constraint_tol; });
  add("solver", "time_budget", [](RunConfig& c) { return &c.mpc.solver.time_budget; });

  add("corridor", "n_intersections", [](RunConfig& c) { return &c.corridor.n_intersections; });
  add("corridor", "first_signal_min", [](RunConfig& c) { return &c.corridor.first_signal_min; });
  add("corridor", "first_signal_max", [](RunConfig& c) { return &c.corridor.first_signal_max; });
  add("corridor", "spacing_min", [](RunConfig& c) { return &c.corridor.spacing_min; });
  add("corridor", "spacing_max", [](RunConfig& c) { return &c.corridor.spacing_max; });
  add("corridor", "cycle_min", [](RunConfig& c) { return &c.corridor.cycle_min; });
  add("corridor", "cycle_max", [](RunConfig& c) { return &c.corridor.cycle_max; });
  add("corridor", "green_fraction", [](RunConfig& c) { return &c.corridor.green_fraction; });
  add("corridor", "duration", [](RunConfig& c) { return &c.corridor.duration; });
  add("corridor", "d_p0", [](RunConfig& c) { return &c.corridor.d_p0; });
  add("corridor", "v_p0_min", [](RunConfig& c) { return &c.corridor.v_p0_min; });
  add("corridor", "v_p0_max", [](RunConfig& c) { return &c.corridor.v_p0_max; });
  return k;
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) throw ConfigError(where + ": cannot parse '" + text + "'");
  return v;
}

inline double parse_real(const std::string& text, const std::string& where) {
  if (text == "inf") return kInf;
  if (text == "-inf") return -kInf;
  return parse_number<double>(text, where);
}

inline void assign(const ConfigRef& ref, const std::string& text, const std::string& where) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = text;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (text == "true" || text == "1") *p = true;
          else if (text == "false" || text == "0") *p = false;
          else throw ConfigError(where + ": expected true or false, got '" + text + "'");
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_real(text, where);
        } else {
          if (!text.empty() && text[0] == '-') throw ConfigError(where + ": must be non-negative");
          *p = parse_number<T>(text, where);
        }
      },
      ref);
}

inline std::string render(const ConfigRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          if (std::isinf(*p)) return *p > 0 ? "inf" : "-inf";
          // Shortest text that parses back to the same value.
          char buf[32];
          const auto res = std::to_chars(buf, buf + sizeof buf, *p);
          return std::string(buf, res.ptr);
        } else {
          return std::to_string(*p);
        }
      },
      ref);
}

}  // namespace detail

/// Applies INI text on top of `base`. Unknown sections or keys are errors.
[[nodiscard]] inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  const auto keys = detail::config_keys();
  std::map<std::string, const detail::ConfigKey*> index;
  for (const auto& k : keys) index[k.section + "." + k.key] = &k;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      if (name == "run.mode") {
        base.mode = parse_run_mode(value.data());
        continue;
      }
      const auto it = index.find(name);
      if (it == index.end()) throw ConfigError("config: unknown key '" + name + "'");
      detail::assign(it->second->ref(base), value.data(), name);
    }
  }
  base.vehicle.set_drag(base.vehicle.C_D, base.vehicle.rho_a, base.vehicle.A);
  base.validate();
  return base;
}

[[nodiscard]] inline RunConfig parse_config_string(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

[[nodiscard]] inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, std::move(base));
}

/// Full INI rendering of every setting; parsing it reproduces the config.
[[nodiscard]] inline std::string config_snapshot(const RunConfig& cfg) {
  RunConfig c = cfg;
  std::ostringstream os;
  std::string section;
  for (const auto& k : detail::config_keys()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
      if (section == "run") os << "mode = " << to_string(c.mode) << '\n';
    }
    os << k.key << " = " << detail::render(k.ref(c)) << '\n';
  }
  return os.str();
}

}  // namespace ecodrive
