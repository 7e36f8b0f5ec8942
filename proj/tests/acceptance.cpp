// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Unit-suite binaries to time are passed with --unit.

#include <CLI11.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecodrive/ecodrive.hpp"
#include "support/oracles.hpp"

namespace {

using namespace ecodrive;
using namespace ecodrive::oracle;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok) { pass = pass && ok; }
};

int failures = 0;

void report(int id, const char* name, const Verdict& v) {
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << ' ' << id << ' ' << name << ": " << v.detail.str() << std::endl;
}

struct Percentiles {
  double min, p50, p90, max;
};

Percentiles percentiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) { return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))]; };
  return {v.front(), median(v), at(0.9), v.back()};
}

// ------------------------------------------------------------ closed loops

struct LoopResult {
  std::string tag;
  std::optional<RunLog> log;  // empty after a collision
  std::string failure;
  AuditReport audit;
  double r_soc = std::numeric_limits<double>::quiet_NaN();
  double r_m = std::numeric_limits<double>::quiet_NaN();
};

std::vector<LoopResult> all_runs;  // every closed loop, for the audit criterion

LoopResult closed_loop(const std::string& tag, const Scenario& sc, const EvModel& m, const MpcConfig& cfg) {
  LoopResult r;
  r.tag = tag;
  try {
    r.log = run_closed_loop(sc, m, cfg);
    r.audit = audit_run(*r.log, sc, m, cfg.ocp_config());
    const Comparison c = compare_to_baseline(*r.log, sc, m);
    r.r_soc = c.r_soc;
    r.r_m = c.r_m;
  } catch (const CollisionError& e) {
    r.failure = e.what();
    r.audit.collisions = 1;
  }
  all_runs.push_back(r);
  return r;
}

Scenario corridor(std::uint64_t seed, double duration = 180.0) {
  CorridorConfig cc;
  cc.duration = duration;
  return generate_corridor_scenario(seed, cc);
}

// ------------------------------------------------------------ criteria

void model_unit_suite(const std::vector<std::string>& binaries) {
  Verdict v;
  if (binaries.empty()) {
    v.require(false);
    v.detail << "no unit binaries given";
    report(1, "model unit suite", v);
    return;
  }
  const auto t0 = Clock::now();
  std::vector<std::string> failed;
  for (const auto& b : binaries) {
    const std::string cmd = "\"" + b + "\" --gtest_brief=1 > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) failed.push_back(std::filesystem::path(b).filename().string());
  }
  const double t = seconds_since(t0);
  v.require(failed.empty());
  v.require(t < 10.0);
  v.detail << binaries.size() << " suites in " << t << " s (limit 10 s)";
  for (const auto& f : failed) v.detail << "; failed " << f;
  report(1, "model unit suite", v);
}

void gradient_oracle() {
  const auto t0 = Clock::now();
  const OcpProblem ocp = fd_problem();
  std::mt19937_64 rng(4242);
  double worst_g = 0.0, worst_j = 0.0;
  constexpr int kPoints = 100;
  for (int trial = 0; trial < kPoints; ++trial) {
    const VectorXd z = random_point(ocp.layout(), rng);
    VectorXd g;
    ocp.gradient(z, g);
    const Eigen::MatrixXd J = Eigen::MatrixXd(evaluate_jacobian(ocp, z));
    for (Index i = 0; i < z.size(); ++i) {
      const double h = fd_step(z[i]);
      VectorXd zp = z, zm = z, cp, cm;
      zp[i] += h;
      zm[i] -= h;
      worst_g = std::max(worst_g, mixed_rel_err(g[i], (ocp.objective(zp) - ocp.objective(zm)) / (2.0 * h)));
      ocp.constraints(zp, cp);
      ocp.constraints(zm, cm);
      const VectorXd col = (cp - cm) / (2.0 * h);
      for (Index r = 0; r < J.rows(); ++r) worst_j = std::max(worst_j, mixed_rel_err(J(r, i), col[r]));
    }
  }
  const double t = seconds_since(t0);
  Verdict v;
  v.require(worst_g <= 1e-5 && worst_j <= 1e-5 && t < 60.0);
  v.detail << kPoints << " points, N=" << ocp.layout().N << ", max rel err gradient " << worst_g << ", Jacobian "
           << worst_j << " (limit 1e-5), " << t << " s";
  report(2, "gradient oracle", v);
}

void solver_correctness() {
  Verdict v;
  const ToyCase t = toy_case();
  const double J_dp = dp_oracle(t);
  const auto ocp = build_ocp(t.x0, t.pred, {}, {}, t.model, t.cfg);
  const auto sol = solve_ocp(ocp, warm_start(nullptr, 10, t.x0, t.pred, {}, t.model, t.cfg)).solution;
  const double rel = std::abs(sol.objective - J_dp) / std::abs(J_dp);
  v.require(sol.optimal() && rel <= 0.01);
  v.detail << "toy N=10 objective " << sol.objective << " vs DP " << J_dp << " (rel " << rel << ")";

  const Eigen::Vector2d ref = disk_rosenbrock_oracle();
  const Solution ros = solve(DiskRosenbrock(), VectorXd::Zero(2));
  const double ros_err = std::max((ros.x - ref).lpNorm<Eigen::Infinity>(),
                                  std::abs(ros.objective - DiskRosenbrock::f(ref[0], ref[1])));
  v.require(ros.status == SolveStatus::Optimal && ros_err <= 1e-6);
  v.detail << "; disk Rosenbrock err " << ros_err;

  const auto [qp, xs] = planted_box_qp(11);
  const Solution q = solve(qp, VectorXd::Zero(xs.size()));
  const double qp_err = std::max((q.x - xs).lpNorm<Eigen::Infinity>(), std::abs(q.objective - qp.objective(xs)));
  v.require(q.status == SolveStatus::Optimal && qp_err <= 1e-6);
  v.detail << "; bounded QP err " << qp_err;
  report(3, "solver correctness", v);
}

void real_time_budget(const EvModel& m) {
  Verdict v;
  MpcConfig cfg;
  const LoopResult r = closed_loop("realtime", corridor(101, 100.0), m, cfg);
  if (!r.log) {
    v.require(false);
    v.detail << r.failure;
    report(4, "real-time budget", v);
    return;
  }
  std::vector<double> times;
  for (const auto& c : r.log->cycles) times.push_back(c.solve_time);
  const Percentiles p = percentiles(times);
  v.require(times.size() >= 100 && cfg.N() == 150 && p.p50 < 1.0);
  v.detail << times.size() << " cycles, N=" << cfg.N() << ", solve time s: min " << p.min << " median " << p.p50
           << " p90 " << p.p90 << " max " << p.max << " (median limit 1.0)";
  report(4, "real-time budget", v);
}

void energy_and_split(const EvModel& m) {
  Verdict e, s;
  MpcConfig cfg;
  bool in_band = true;
  e.detail << "R_SOC %";
  s.detail << "R_m %";
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Scenario sc = corridor(seed);
    e.require(sc.signals.size() >= 2 && sc.duration() >= 150.0);
    const LoopResult r = closed_loop("ideal" + std::to_string(seed), sc, m, cfg);
    if (!r.log) {
      e.require(false);
      s.require(false);
      e.detail << " seed" << seed << "=" << r.failure;
      continue;
    }
    e.require(r.r_soc > 0.0);
    s.require(r.r_m > 0.0);
    in_band = in_band && r.r_soc >= 5.0 && r.r_soc <= 30.0;
    e.detail << " seed" << seed << "=" << r.r_soc;
    s.detail << " seed" << seed << "=" << r.r_m;
  }
  e.detail << (in_band ? "; all inside" : "; not all inside") << " the 5-30 target band";
  report(5, "energy benefit", e);

  // Per-step split against the 1 N*m grid at 500 operating points.
  const auto& pt = m.powertrain;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int within = 0, beats_rule = 0;
  constexpr int kPoints = 500;
  for (int i = 0; i < kPoints; ++i) {
    const double w = 20.0 + 440.0 * U(rng);
    const double cap = max_torque_envelope(pt.front, w) + max_torque_envelope(pt.rear, w);
    const double T = (2.0 * U(rng) - 1.0) * cap;
    const OptimalSplit opt = optimal_split(T, w, pt);
    const TorqueSplit rule = rule_based_split(T, {}, w, pt);
    const double P_rule = pt.poly_front(w, rule.Tf) + pt.poly_rear(w, rule.Tr);
    const double P_grid = grid_power(T, w, pt);
    if (opt.P <= P_rule + 1e-9) ++beats_rule;
    if (std::abs(opt.P - P_grid) <= 0.02 * std::max(std::abs(P_grid), 1.0)) ++within;
  }
  s.require(beats_rule == kPoints && within >= 95 * kPoints / 100);
  s.detail << "; split no worse than 1:1 rule at " << beats_rule << "/" << kPoints << ", within 2% of grid oracle at "
           << within << "/" << kPoints << " (need 95%)";
  report(6, "torque-split benefit", s);
}

void robustness(const EvModel& m, int seeds) {
  struct Case {
    const char* name;
    double sigma, mu, P_s;
    bool needs_benefit;
  };
  const Case cases[] = {{"sigma=0.5", 0.5, 0.0, 0.0, true},
                        {"P_s=3", 0.0, 0.0, 3.0, true},
                        {"sigma=0.5,mu=0.25,P_s=1", 0.5, 0.25, 1.0, true},
                        {"sigma=3", 3.0, 0.0, 0.0, false}};
  Verdict v;
  for (const Case& c : cases) {
    std::vector<double> r_soc;
    std::size_t collisions = 0, red = 0;
    for (int i = 0; i < seeds; ++i) {
      const auto seed = static_cast<std::uint64_t>(i + 1);
      MpcConfig cfg;
      cfg.seed = seed;
      cfg.noise.sigma = c.sigma;
      cfg.noise.mu = c.mu;
      cfg.noise.P_s = c.P_s;
      const LoopResult r = closed_loop(std::string(c.name) + "/" + std::to_string(seed), corridor(seed), m, cfg);
      collisions += r.audit.collisions;
      red += r.audit.red_crossings;
      if (r.log) r_soc.push_back(r.r_soc);
    }
    const double med = r_soc.empty() ? std::numeric_limits<double>::quiet_NaN() : median(r_soc);
    v.require(collisions == 0 && red == 0);
    if (c.needs_benefit) v.require(med > 0.0);
    v.detail << '[' << c.name << ": " << seeds << " seeds, collisions " << collisions << ", red " << red
             << ", median R_SOC " << med << "%] ";
  }
  report(7, "robustness under uncertainty", v);
}

void constraint_audits(const OcpConfig& ocfg) {
  Verdict v;
  std::size_t steps = 0, hard = 0, rate = 0, collisions = 0, red = 0, headway = 0;
  double s1 = 0.0, s2 = 0.0;
  for (const auto& r : all_runs) {
    steps += r.audit.steps;
    hard += r.audit.hard_violations;
    rate += r.audit.rate_violations;
    collisions += r.audit.collisions;
    red += r.audit.red_crossings;
    headway += r.audit.headway_violations;
    s1 = std::max(s1, r.audit.max_s1);
    s2 = std::max(s2, r.audit.max_s2);
  }
  v.require(hard == 0 && rate == 0 && collisions == 0 && red == 0);
  v.require(std::isfinite(s1) && s2 <= ocfg.slack_near_max + 1e-6);
  v.detail << all_runs.size() << " runs, " << steps << " plant steps: hard " << hard << ", torque rate " << rate
           << ", collisions " << collisions << ", red " << red << "; max s1 " << s1 << " m, max s2 " << s2
           << " m (cap " << ocfg.slack_near_max << "); headway band misses " << headway << " (soft)";
  report(8, "constraint audits", v);
}

void noise_statistics() {
  Verdict v;
  constexpr int kSamples = 10000;
  constexpr std::size_t N = 150;
  const double sigma = 0.5, dt = 0.1;
  PrecedingPrediction p;
  p.dt = dt;
  p.v.assign(N + 1, 10.0);
  p.d.assign(N + 1, 0.0);
  p.reintegrate();
  const std::size_t ks[] = {10, 50, 100, 150};
  std::vector<double> sum(4, 0.0), sum_sq(4, 0.0);
  std::mt19937_64 rng(9001);
  for (int i = 0; i < kSamples; ++i) {
    const PrecedingPrediction q = inject_gaussian_accel_noise(p, sigma, 0.0, rng, false);
    for (std::size_t j = 0; j < 4; ++j) {
      const double e = q.v[ks[j]] - p.v[ks[j]];
      sum[j] += e;
      sum_sq[j] += e * e;
    }
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const double mean = sum[j] / kSamples;
    const double var = (sum_sq[j] - kSamples * mean * mean) / (kSamples - 1);
    const double expect = sigma * sigma * static_cast<double>(ks[j]) * dt * dt;
    worst = std::max(worst, std::abs(var - expect) / expect);
  }
  v.require(worst <= 0.05);
  v.detail << "variance at k=10,50,100,150 worst rel err " << worst << " (limit 0.05)";

  NoiseConfig nc;
  nc.P_s = 3.0;
  const int half = 15, bins = 2 * half + 1, draws = 31000;
  std::vector<int> counts(bins, 0);
  bool in_range = true;
  for (int i = 0; i < draws; ++i) {
    const int s = sample_shift(nc, dt, rng);
    if (s < -half || s > half) {
      in_range = false;
      continue;
    }
    ++counts[static_cast<std::size_t>(s + half)];
  }
  const double expected = static_cast<double>(draws) / bins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double crit = boost::math::quantile(boost::math::chi_squared(bins - 1), 0.99);
  v.require(in_range && chi2 < crit);
  v.detail << "; shift chi2 " << chi2 << " over " << bins << " bins (1% critical " << crit << ")";
  report(9, "noise-model statistics", v);
}

void polynomial_gate() {
  Verdict v;
  for (const MotorSpec& spec : {default_front_im(), default_rear_pmsm()}) {
    const PowerPolynomial poly = fit_power_polynomial(generate_motor_map(spec), 5);
    const double pct = poly.rmse() / poly.peak_abs_power() * 100.0;
    v.require(pct <= 2.0);
    v.detail << to_string(spec.kind) << " RMSE " << pct << "% of peak; ";
  }
  const PowerPolynomial::Domain dom{0.0, 1400.0, -220.0, 220.0};
  Eigen::VectorXd truth(PowerPolynomial::num_terms(5));
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(-5e3, 5e3);
  for (Eigen::Index k = 0; k < truth.size(); ++k) truth[k] = U(rng);
  const PowerPolynomial reference(5, dom, truth);
  std::vector<PowerSample> samples;
  for (double w = 0.0; w <= 1400.0; w += 10.0)
    for (double T = -220.0; T <= 220.0; T += 5.0) samples.push_back({w, T, reference(w, T)});
  const double err = (fit_power_polynomial(samples, dom, 5).coeffs() - truth).lpNorm<Eigen::Infinity>();
  v.require(err <= 1e-8);
  v.detail << "self-fit coefficient err " << err << " (limit 1e-8)";
  report(10, "polynomial fit gate", v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<std::string> unit;
  int seeds = 10;
  app.add_option("--unit", unit, "Unit-suite binaries timed for criterion 1");
  app.add_option("--seeds", seeds, "Seeds per noise configuration")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  const EvModel m{};
  model_unit_suite(unit);
  gradient_oracle();
  solver_correctness();
  real_time_budget(m);
  energy_and_split(m);
  robustness(m, seeds);
  constraint_audits(MpcConfig{}.ocp_config());
  noise_statistics();
  polynomial_gate();
  std::cout << "acceptance: " << 10 - failures << "/10 criteria passed in " << seconds_since(t0) << " s"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
