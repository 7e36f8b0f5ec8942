#pragma once

// Batch front end. Needs CLI11 (vendor/CLI11.hpp) on the include path.

#include <CLI11.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecodrive/baseline.hpp"
#include "ecodrive/config.hpp"
#include "ecodrive/csv.hpp"
#include "ecodrive/mpc.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/traffic.hpp"

namespace ecodrive::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kConfig = 3, kScenario = 4, kCollision = 5, kFailure = 6 };

class CliError : public std::runtime_error {
 public:
  CliError(std::string kind, int code, const std::string& what)
      : std::runtime_error(what), kind(std::move(kind)), code(code) {}
  std::string kind;
  int code;
};

namespace detail {

/// Writes through `writer` into a temporary next to `path`, then renames.
/// Readers never see a half-written file.
inline void publish(const fs::path& path, const std::function<void(const std::string&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  try {
    writer(tmp.string());
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  fs::rename(tmp, path);
}

inline void publish_text(const fs::path& path, const std::string& text) {
  publish(path, [&](const std::string& tmp) {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  });
}

/// Ordered key/value record written as a single INI section.
using Record = std::vector<std::pair<std::string, std::string>>;

inline std::string num(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

inline void publish_record(const fs::path& path, const std::string& section, const Record& rec) {
  std::ostringstream os;
  os << '[' << section << "]\n";
  for (const auto& [k, v] : rec) os << k << " = " << v << '\n';
  publish_text(path, os.str());
}

inline std::map<std::string, std::string> read_record(const fs::path& path, const std::string& section) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw CliError("report", kFailure, "cannot read " + path.string() + ": " + e.message());
  }
  std::map<std::string, std::string> out;
  const auto body = tree.get_child_optional(section);
  if (!body) throw CliError("report", kFailure, path.string() + ": missing [" + section + "]");
  for (const auto& [k, v] : *body) out[k] = v.data();
  return out;
}

inline double field(const std::map<std::string, std::string>& r, const std::string& key, const fs::path& where) {
  const auto it = r.find(key);
  if (it == r.end()) throw CliError("report", kFailure, where.string() + ": missing key " + key);
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw CliError("report", kFailure, where.string() + ": bad value for " + key);
  }
}

inline RunConfig base_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_config(path);
}

inline Scenario load_run_scenario(const RunConfig& cfg) {
  if (cfg.scenario.empty()) throw CliError("usage", kUsage, "no scenario given (--scenario or run.scenario)");
  for (const auto* p : {&cfg.scenario, &cfg.signals, &cfg.grade})
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("referenced file does not exist: " + *p);
  return load_scenario(cfg.scenario, cfg.signals, cfg.grade);
}

inline void write_series(const RunLog& log, const fs::path& dir) {
  publish(dir / "trajectory.csv", [&](const std::string& tmp) {
    std::ofstream out(tmp);
    out.precision(10);
    out << "t,d,v,d_p,v_p,gap\n";
    for (const auto& s : log.steps)
      out << s.t << ',' << s.d << ',' << s.v << ',' << s.d_p << ',' << s.v_p << ',' << s.d_p - s.d << '\n';
  });
  publish(dir / "soc.csv", [&](const std::string& tmp) {
    std::ofstream out(tmp);
    out.precision(10);
    out << "t,soc,I_bat\n";
    for (const auto& s : log.steps) out << s.t << ',' << s.soc << ',' << s.I_bat << '\n';
  });
  publish(dir / "torque.csv", [&](const std::string& tmp) {
    std::ofstream out(tmp);
    out.precision(10);
    out << "t,T_f,T_r,F_b,P_bat\n";
    for (const auto& s : log.steps)
      out << s.t << ',' << s.Tf << ',' << s.Tr << ',' << s.Fb << ',' << s.P_bat << '\n';
  });
}

struct RunOutcome {
  RunLog log;
  Record summary;
};

/// One run in the configured mode. Collisions propagate as CollisionError.
inline RunOutcome execute(const RunConfig& cfg, const Scenario& sc) {
  const EvModel m = cfg.model();
  RunOutcome o;
  Record& r = o.summary;
  r.emplace_back("mode", to_string(cfg.mode));
  r.emplace_back("scenario", cfg.scenario.empty() ? "generated" : cfg.scenario);
  r.emplace_back("seed", std::to_string(cfg.mpc.seed));
  r.emplace_back("sigma", num(cfg.mpc.noise.sigma));
  r.emplace_back("mu", num(cfg.mpc.noise.mu));
  r.emplace_back("P_s", num(cfg.mpc.noise.P_s));
  const std::size_t steps = closed_loop_steps(sc, cfg.mpc);

  if (cfg.mode == RunMode::Baseline) {
    const BaselineReport b = baseline_run(sc, m, cfg.mpc.soc0, {}, steps);
    o.log = b.log;
    const RunSummary s = summarize(o.log);
    r.emplace_back("steps", std::to_string(o.log.steps.size()));
    r.emplace_back("duration_s", num(s.duration));
    r.emplace_back("distance_m", num(s.distance));
    r.emplace_back("soc0", num(s.soc0));
    r.emplace_back("final_soc", num(s.final_soc));
    r.emplace_back("traction_energy_J", num(s.traction_energy));
    r.emplace_back("saturated_steps", std::to_string(b.saturated_steps));
    return o;
  }

  const RunLog loop = run_closed_loop(sc, m, cfg.mpc);
  const AuditReport audit = audit_run(loop, sc, m, cfg.mpc.ocp_config());
  const Comparison c = compare_to_baseline(loop, sc, m);
  o.log = cfg.mode == RunMode::Ablation ? resplit_run(loop, m) : loop;
  const RunSummary s = summarize(loop);
  r.emplace_back("steps", std::to_string(o.log.steps.size()));
  r.emplace_back("duration_s", num(s.duration));
  r.emplace_back("distance_m", num(s.distance));
  r.emplace_back("soc0", num(s.soc0));
  r.emplace_back("final_soc", num(o.log.final_state.soc));
  r.emplace_back("optimal_final_soc", num(c.soc_ego));
  r.emplace_back("baseline_final_soc", num(c.soc_baseline));
  r.emplace_back("r_soc_pct", num(cfg.mode == RunMode::Ablation
                                      ? compute_r_soc(o.log.final_state.soc, c.soc_baseline, c.soc0)
                                      : c.r_soc));
  r.emplace_back("traction_energy_J", num(traction_energy(o.log)));
  r.emplace_back("energy_opt_J", num(c.energy_opt));
  r.emplace_back("energy_rule_J", num(c.energy_rule));
  r.emplace_back("r_m_pct", num(c.r_m));
  r.emplace_back("cycles", std::to_string(s.cycles));
  r.emplace_back("non_optimal", std::to_string(s.non_optimal));
  r.emplace_back("mean_solve_s", num(s.mean_solve_time));
  r.emplace_back("median_solve_s", num(s.median_solve_time));
  r.emplace_back("max_solve_s", num(s.max_solve_time));
  r.emplace_back("collisions", std::to_string(audit.collisions));
  r.emplace_back("red_crossings", std::to_string(audit.red_crossings));
  r.emplace_back("hard_violations", std::to_string(audit.hard_violations));
  r.emplace_back("rate_violations", std::to_string(audit.rate_violations));
  r.emplace_back("headway_violations", std::to_string(audit.headway_violations));
  r.emplace_back("max_s1", num(audit.max_s1));
  r.emplace_back("max_s2", num(audit.max_s2));
  r.emplace_back("min_gap_m", num(audit.min_gap));
  return o;
}

// ------------------------------------------------------------ subcommands

inline void cmd_gen_scenario(const RunConfig& cfg, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  const Scenario sc = generate_corridor_scenario(seed, cfg.corridor);
  // Stage the whole set, then move file by file.
  const fs::path stage = out / ".staging";
  fs::remove_all(stage);
  save_scenario(sc, stage.string());
  for (const char* f : {"scenario.csv", "signals.csv", "grade.csv"}) fs::rename(stage / f, out / f);
  fs::remove_all(stage);
  log << "scenario seed=" << seed << " samples=" << sc.samples.size() << " signals=" << sc.signals.size()
      << " dir=" << out.string() << '\n';
}

inline void cmd_fit_maps(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  std::ostringstream report;
  report.precision(10);
  report << "motor,kind,degree,samples,rmse_W,peak_abs_W,rmse_pct,gate_pass\n";
  for (const auto& [name, spec] : {std::pair{"front", cfg.front}, std::pair{"rear", cfg.rear}}) {
    const EfficiencyMap map = generate_motor_map(spec);
    const PowerPolynomial poly = fit_power_polynomial(map, cfg.poly_degree);
    publish(out / (std::string("map_") + name + ".csv"), [&](const std::string& tmp) { write_map_csv(map, tmp); });
    publish(out / (std::string("coeffs_") + name + ".csv"), [&](const std::string& tmp) {
      std::ofstream f(tmp);
      f.precision(17);
      f << "index,coefficient\n";
      for (Eigen::Index i = 0; i < poly.coeffs().size(); ++i) f << i << ',' << poly.coeffs()[i] << '\n';
    });
    const double pct = poly.rmse() / poly.peak_abs_power() * 100.0;
    report << name << ',' << to_string(spec.kind) << ',' << cfg.poly_degree << ',' << map.feasible.count() << ','
           << poly.rmse() << ',' << poly.peak_abs_power() << ',' << pct << ',' << (pct <= 2.0 ? 1 : 0) << '\n';
    log << name << ' ' << to_string(spec.kind) << " rmse=" << pct << "% of peak\n";
  }
  publish_text(out / "fit_report.csv", report.str());
}

inline void cmd_run(RunConfig cfg, const fs::path& out, std::ostream& log) {
  const Scenario sc = load_run_scenario(cfg);
  cfg.scenario = fs::absolute(cfg.scenario).string();
  if (!cfg.signals.empty()) cfg.signals = fs::absolute(cfg.signals).string();
  if (!cfg.grade.empty()) cfg.grade = fs::absolute(cfg.grade).string();
  cfg.out = out.string();
  // Snapshot first so an aborted run can still be reproduced.
  publish_text(out / "config.ini", config_snapshot(cfg));
  const RunOutcome o = execute(cfg, sc);
  publish(out / "run.csv", [&](const std::string& tmp) { write_run_csv(o.log, tmp); });
  if (!o.log.cycles.empty())
    publish(out / "cycles.csv", [&](const std::string& tmp) { write_cycles_csv(o.log, tmp); });
  write_series(o.log, out);
  publish_record(out / "summary.ini", "summary", o.summary);
  log << "run mode=" << to_string(cfg.mode) << " steps=" << o.log.steps.size()
      << " final_soc=" << o.log.final_state.soc << " dir=" << out.string() << '\n';
}

struct SweepGrid {
  std::vector<double> sigma{0.0};
  std::vector<double> mu{0.0};
  std::vector<double> shift{0.0};
  int seeds = 10;
  std::uint64_t first_seed = 1;
};

inline void cmd_sweep(const RunConfig& base, const SweepGrid& g, const fs::path& out, std::ostream& log) {
  if (g.seeds < 1) throw CliError("usage", kUsage, "--seeds must be >= 1");
  const std::optional<Scenario> fixed =
      base.scenario.empty() ? std::nullopt : std::optional<Scenario>(load_run_scenario(base));
  std::ostringstream rows;
  rows.precision(10);
  rows << "sigma,mu,P_s,seed,collided,r_soc_pct,r_m_pct,final_soc,baseline_final_soc,collisions,red_crossings,"
          "hard_violations,max_s1,max_s2,min_gap_m,median_solve_s\n";
  struct Cell {
    double sigma, mu, P_s;
    std::vector<double> r_soc;
    std::size_t runs = 0, collisions = 0, red = 0, hard = 0;
  };
  std::vector<Cell> cells;
  for (double sigma : g.sigma)
    for (double mu : g.mu)
      for (double P_s : g.shift) {
        Cell cell{sigma, mu, P_s, {}};
        for (int i = 0; i < g.seeds; ++i) {
          const std::uint64_t seed = g.first_seed + static_cast<std::uint64_t>(i);
          RunConfig cfg = base;
          cfg.mode = RunMode::Optimal;
          cfg.mpc.seed = seed;
          cfg.mpc.noise.sigma = sigma;
          cfg.mpc.noise.mu = mu;
          cfg.mpc.noise.P_s = P_s;
          cfg.validate();
          const Scenario sc = fixed ? *fixed : generate_corridor_scenario(seed, cfg.corridor);
          std::map<std::string, std::string> s;
          bool collided = false;
          try {
            for (const auto& [k, v] : execute(cfg, sc).summary) s[k] = v;
          } catch (const CollisionError&) {
            collided = true;
          }
          const auto get = [&](const char* k) { return collided ? std::string() : s.at(k); };
          rows << sigma << ',' << mu << ',' << P_s << ',' << seed << ',' << int(collided) << ','
               << get("r_soc_pct") << ',' << get("r_m_pct") << ',' << get("final_soc") << ','
               << get("baseline_final_soc") << ',' << (collided ? "1" : s.at("collisions")) << ','
               << get("red_crossings") << ',' << get("hard_violations") << ',' << get("max_s1") << ','
               << get("max_s2") << ',' << get("min_gap_m") << ',' << get("median_solve_s") << '\n';
          ++cell.runs;
          if (collided) {
            ++cell.collisions;
          } else {
            cell.r_soc.push_back(std::stod(s.at("r_soc_pct")));
            cell.collisions += std::stoul(s.at("collisions"));
            cell.red += std::stoul(s.at("red_crossings"));
            cell.hard += std::stoul(s.at("hard_violations"));
          }
          std::ostringstream tag;
          tag << "sigma" << sigma << "_mu" << mu << "_Ps" << P_s << "_seed" << seed;
          Record rec(s.begin(), s.end());
          rec.emplace_back("collided", collided ? "1" : "0");
          publish_record(out / "runs" / (tag.str() + ".ini"), "summary", rec);
          log << tag.str() << (collided ? " collision" : " r_soc=" + s.at("r_soc_pct")) << '\n';
        }
        cells.push_back(std::move(cell));
      }
  publish_text(out / "sweep.csv", rows.str());

  std::ostringstream table;
  table.precision(10);
  table << "sigma,mu,P_s,runs,collisions,red_crossings,hard_violations,median_r_soc_pct,mean_r_soc_pct\n";
  for (const auto& c : cells) {
    double mean = 0.0;
    for (double x : c.r_soc) mean += x;
    if (!c.r_soc.empty()) mean /= static_cast<double>(c.r_soc.size());
    table << c.sigma << ',' << c.mu << ',' << c.P_s << ',' << c.runs << ',' << c.collisions << ',' << c.red << ','
          << c.hard << ',';
    if (!c.r_soc.empty()) table << median(c.r_soc) << ',' << mean;
    else table << ',';
    table << '\n';
  }
  publish_text(out / "table.csv", table.str());
}

inline void cmd_report(const std::vector<std::string>& dirs, const fs::path& out, std::ostream& log) {
  struct Entry {
    fs::path dir;
    std::map<std::string, std::string> rec;
  };
  std::vector<Entry> entries;
  for (const auto& d : dirs) entries.push_back({d, read_record(fs::path(d) / "summary.ini", "summary")});

  std::ostringstream table;
  table.precision(10);
  table << "run,scenario,mode,duration_s,r_soc_pct,r_soc_source,baseline_run,r_m_pct,mean_solve_s,median_solve_s,"
           "final_soc\n";
  for (const auto& e : entries) {
    const std::string mode = e.rec.at("mode");
    if (mode == "baseline") continue;
    const fs::path where = e.dir / "summary.ini";
    const double soc0 = field(e.rec, "soc0", where);
    const double soc = field(e.rec, "final_soc", where);
    double r_soc = field(e.rec, "r_soc_pct", where);
    std::string source = "internal", paired;
    for (const auto& b : entries) {
      if (b.rec.at("mode") != "baseline" || b.rec.at("scenario") != e.rec.at("scenario") ||
          b.rec.at("steps") != e.rec.at("steps") || field(b.rec, "soc0", where) != soc0)
        continue;
      r_soc = compute_r_soc(soc, field(b.rec, "final_soc", b.dir / "summary.ini"), soc0);
      source = "pair";
      paired = b.dir.filename().string();
      break;
    }
    table << e.dir.filename().string() << ',' << e.rec.at("scenario") << ',' << mode << ','
          << field(e.rec, "duration_s", where) << ',' << r_soc << ',' << source << ',' << paired << ','
          << field(e.rec, "r_m_pct", where) << ',' << field(e.rec, "mean_solve_s", where) << ','
          << field(e.rec, "median_solve_s", where) << ',' << soc << '\n';
    log << e.dir.filename().string() << " r_soc=" << r_soc << "% (" << source << ")\n";
  }
  publish_text(out / "table.csv", table.str());

  // Long-format series with a leading run column, one file per figure.
  for (const char* name : {"trajectory.csv", "soc.csv", "torque.csv"}) {
    std::ostringstream os;
    os.precision(10);
    bool header = false;
    for (const auto& e : entries) {
      const CsvTable t = read_csv((e.dir / name).string());
      if (!header) {
        os << "run";
        for (const auto& h : t.header) os << ',' << h;
        os << '\n';
        header = true;
      }
      for (const auto& row : t.rows) {
        os << e.dir.filename().string();
        for (const auto& c : row) {
          os << ',';
          if (c) os << *c;
        }
        os << '\n';
      }
    }
    publish_text(out / (std::string("series_") + name), os.str());
  }
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
    else if (c == '"') c = '\'';
  return s;
}

}  // namespace detail

/// Parses and executes one subcommand. Progress goes to `out`; failures
/// print a single line `error kind=<kind> code=<n> message="..."` to `err`.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Eco-driving MPC for a dual-motor electric vehicle", "ecodrive"};
  app.require_subcommand(1);

  std::string config_path, scenario, mode, out_dir;
  std::uint64_t seed = 1;
  double sigma = 0.0, mu = 0.0, shift = 0.0;
  detail::SweepGrid grid;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("gen-scenario", "Write a synthetic signalized corridor scenario");
  gen->add_option("--config", config_path, "INI configuration");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* fit = app.add_subcommand("fit-maps", "Generate both motor maps, fit them and report RMSE");
  fit->add_option("--config", config_path, "INI configuration");
  fit->add_option("--out", out_dir, "Output directory")->required();

  auto* run = app.add_subcommand("run", "One closed-loop or baseline run");
  run->add_option("--config", config_path, "INI configuration");
  run->add_option("--scenario", scenario, "Scenario CSV or directory");
  run->add_option("--mode", mode, "optimal, baseline or ablation");
  auto* seed_opt = run->add_option("--seed", seed, "Noise seed");
  auto* sigma_opt = run->add_option("--sigma", sigma, "Acceleration noise std, m/s^2");
  auto* mu_opt = run->add_option("--mu", mu, "Acceleration noise mean, m/s^2");
  auto* shift_opt = run->add_option("--shift", shift, "Phase-shift range P_s, s");
  run->add_option("--out", out_dir, "Output directory");

  auto* sweep = app.add_subcommand("sweep-noise", "Noise grid over seeds");
  sweep->add_option("--config", config_path, "INI configuration");
  sweep->add_option("--scenario", scenario, "Fixed scenario; default generates one per seed");
  sweep->add_option("--sigma", grid.sigma, "Noise std values")->delimiter(',');
  sweep->add_option("--mu", grid.mu, "Noise mean values")->delimiter(',');
  sweep->add_option("--shift", grid.shift, "Phase-shift ranges")->delimiter(',');
  sweep->add_option("--seeds", grid.seeds, "Seeds per grid point");
  sweep->add_option("--seed", grid.first_seed, "First seed");
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Aggregate run directories into a table and plot series");
  report->add_option("runs", runs, "Run directories")->required();
  report->add_option("--out", out_dir, "Output directory")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error kind=usage code=" << int(kUsage) << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return kUsage;
  }

  try {
    RunConfig cfg = detail::base_config(config_path);
    if (!scenario.empty()) cfg.scenario = scenario;
    if (!mode.empty()) cfg.mode = parse_run_mode(mode);
    if (*seed_opt) cfg.mpc.seed = seed;
    if (*sigma_opt) cfg.mpc.noise.sigma = sigma;
    if (*mu_opt) cfg.mpc.noise.mu = mu;
    if (*shift_opt) cfg.mpc.noise.P_s = shift;
    if (!out_dir.empty()) cfg.out = out_dir;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const fs::path dir = cfg.out;

    if (gen->parsed()) detail::cmd_gen_scenario(cfg, seed, dir, out);
    else if (fit->parsed()) detail::cmd_fit_maps(cfg, dir, out);
    else if (run->parsed()) detail::cmd_run(cfg, dir, out);
    else if (sweep->parsed()) detail::cmd_sweep(cfg, grid, dir, out);
    else if (report->parsed()) detail::cmd_report(runs, dir, out);
    return kOk;
  } catch (const CliError& e) {
    err << "error kind=" << e.kind << " code=" << e.code << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "error kind=config code=" << int(kConfig) << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return kConfig;
  } catch (const CsvError& e) {
    err << "error kind=scenario code=" << int(kScenario) << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return kScenario;
  } catch (const ScenarioError& e) {
    err << "error kind=scenario code=" << int(kScenario) << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return kScenario;
  } catch (const CollisionError& e) {
    err << "error kind=collision code=" << int(kCollision) << " t=" << e.t() << " gap=" << e.gap() << " message=\""
        << detail::one_line(e.what()) << "\"\n";
    return kCollision;
  } catch (const std::exception& e) {
    err << "error kind=failure code=" << int(kFailure) << " message=\"" << detail::one_line(e.what()) << "\"\n";
    return kFailure;
  }
}

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, out, err);
}

}  // namespace ecodrive::cli
