#include "ecodrive/baseline.hpp"
#include "ecodrive/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace ecodrive {
namespace {

const EvModel& default_model() {
  static const EvModel m{};
  return m;
}

// Preceding vehicle at constant speed, Euler-consistent samples.
Scenario cruise(double d0, double v, double duration, double dt = 0.1) {
  Scenario s;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  double d = d0;
  for (std::size_t k = 0; k <= n; ++k) {
    s.samples.push_back({static_cast<double>(k) * dt, d, v, 0.0});
    d += v * dt;
  }
  return s;
}

Control control_for(double a, double v, const EvModel& m) {
  const double T = torque_from_acceleration(a, v, 0.0, 0.0, m.vehicle);
  return {0.5 * T, 0.5 * T, 0.0};
}

TEST(PlantStep, EulerArithmetic) {
  const auto& m = default_model();
  const VehicleState x{100.0, 10.0, 0.8};
  const PlantResult r = plant_step(x, control_for(1.0, 10.0, m), 0.0, m, 0.1);
  EXPECT_NEAR(r.a, 1.0, 1e-12);
  EXPECT_NEAR(r.next.v, 10.1, 1e-12);
  EXPECT_NEAR(r.next.d, 101.0, 1e-12);
  EXPECT_LT(r.next.soc, x.soc);
}

TEST(PlantStep, RestWithoutRollingResistanceOnlyDriftsSoc) {
  EvModel m;
  m.vehicle.mu_r = 0.0;
  const VehicleState x{5.0, 0.0, 0.7};
  const PlantResult r = plant_step(x, {}, 0.0, m, 0.1);
  EXPECT_EQ(r.next.d, x.d);
  EXPECT_EQ(r.next.v, 0.0);
  const double P = m.powertrain.poly_front(0.0, 0.0) + m.powertrain.poly_rear(0.0, 0.0);
  EXPECT_DOUBLE_EQ(r.P_bat, P);
  EXPECT_DOUBLE_EQ(r.next.soc, soc_step(x.soc, battery_current(P, m.battery), 0.1, m.battery));
}

TEST(PlantStep, SpeedClampedAtZero) {
  const auto& m = default_model();
  const PlantResult r = plant_step({0.0, 0.1, 0.8}, {0.0, 0.0, 10000.0}, 0.0, m, 0.1);
  EXPECT_EQ(r.next.v, 0.0);
}

TEST(PlantStep, BatteryLimitPropagates) {
  EvModel m;
  m.battery.U_oc = 60.0;  // max power 3.9 kW
  EXPECT_THROW((void)plant_step({0.0, 10.0, 0.8}, control_for(2.0, 10.0, m), 0.0, m, 0.1),
               PowerExceedsBatteryLimit);
}

TEST(MpcConfig, Validation) {
  MpcConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.N(), 150u);
  EXPECT_EQ(c.steps_per_update(), 10u);
  c.horizon = 15.05;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.update = 20.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

// Plant driven by the planned controls reproduces the planned states: both
// use the same Euler model, so only the solver's residual separates them.
TEST(PlantStep, ReplayOfPlanMatchesPlannedStates) {
  const auto& m = default_model();
  OcpConfig cfg;
  cfg.N = 60;
  const VehicleState x0{0.0, 8.0, 0.8};
  const Scenario sc = cruise(30.0, 11.0, 10.0);
  const auto pred = predict_preceding(sc, 0.0, cfg.N, cfg.dt);
  const OcpProblem ocp = build_ocp(x0, pred, {}, {}, m, cfg);
  SolverOptions o;
  o.kkt_tol = 1e-9;
  o.constraint_tol = 1e-10;
  const auto res = solve_ocp(ocp, warm_start(nullptr, 0, x0, pred, {}, m, cfg), o);
  ASSERT_TRUE(res.solution.optimal()) << to_string(res.solution.status);
  const auto& z = res.solution.x;
  const auto& lay = ocp.layout();
  VehicleState x = x0;
  double worst = 0.0;
  for (std::size_t k = 0; k < cfg.N; ++k) {
    x = plant_step(x, {z[lay.Tf(k)], z[lay.Tr(k)], z[lay.Fb(k)]}, 0.0, m, cfg.dt).next;
    worst = std::max({worst, std::abs(x.d - z[lay.d(k + 1)]), std::abs(x.v - z[lay.v(k + 1)]),
                      std::abs(x.soc - z[lay.soc(k + 1)])});
  }
  RecordProperty("max_replay_error", std::to_string(worst));
  EXPECT_LE(worst, 1e-8);
}

TEST(ClosedLoop, StationaryLeaderEgoAtRest) {
  const auto& m = default_model();
  const Scenario sc = cruise(80.0, 0.0, 20.0);
  MpcConfig c;
  c.initial_gap = 80.0;
  const RunLog log = run_closed_loop(sc, m, c);
  ASSERT_EQ(log.steps.size(), 200u);
  const AuditReport a = audit_run(log, sc, m, c.ocp_config());
  EXPECT_TRUE(a.clean()) << (a.notes.empty() ? "" : a.notes.front());
  EXPECT_EQ(a.headway_violations, 0u);
  // The terminal gap target draws the ego forward; it must stay in the band.
  for (const auto& s : log.steps) {
    EXPECT_GE(s.v, 0.0);
    EXPECT_GE(80.0 - s.d, c.ocp.d_min - c.ocp.slack_near_max + c.ocp.h_min * s.v - 1e-6);
  }
  const double gap = 80.0 - log.final_state.d;
  EXPECT_GE(gap, c.ocp.d_min - c.ocp.slack_near_max);
  EXPECT_LE(gap, c.ocp.d_max + 1e-6);
}

TEST(ClosedLoop, StartsBehindLeaderAtItsSpeed) {
  const auto& m = default_model();
  const Scenario sc = cruise(50.0, 12.0, 5.0);
  const RunLog log = run_closed_loop(sc, m, MpcConfig{});
  ASSERT_FALSE(log.steps.empty());
  EXPECT_DOUBLE_EQ(log.steps.front().d, 10.0);
  EXPECT_DOUBLE_EQ(log.steps.front().v, 12.0);
  EXPECT_EQ(log.cycles.size(), 5u);
}

TEST(ClosedLoop, RejectsShortOrMismatchedScenario) {
  const auto& m = default_model();
  EXPECT_THROW((void)run_closed_loop(cruise(50.0, 10.0, 0.5), m, MpcConfig{}), std::invalid_argument);
  EXPECT_THROW((void)run_closed_loop(cruise(50.0, 10.0, 10.0, 0.2), m, MpcConfig{}), std::invalid_argument);
}

class CorridorRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CorridorConfig cc;
    cc.n_intersections = 2;
    cc.duration = 150.0;
    scenario_ = new Scenario(generate_corridor_scenario(11, cc));
    MpcConfig c;
    log_ = new RunLog(run_closed_loop(*scenario_, default_model(), c));
  }
  static void TearDownTestSuite() {
    delete log_;
    delete scenario_;
  }
  static Scenario* scenario_;
  static RunLog* log_;
};
Scenario* CorridorRun::scenario_ = nullptr;
RunLog* CorridorRun::log_ = nullptr;

TEST_F(CorridorRun, EnergyNoWorseThanBaseline) {
  const auto& m = default_model();
  const BaselineReport base = baseline_run(*scenario_, m, log_->soc0, {}, log_->steps.size());
  RecordProperty("soc_ego", std::to_string(log_->final_state.soc));
  RecordProperty("soc_baseline", std::to_string(base.log.final_state.soc));
  EXPECT_GE(log_->final_state.soc, base.log.final_state.soc);
}

TEST_F(CorridorRun, AuditsPass) {
  const AuditReport a = audit_run(*log_, *scenario_, default_model(), MpcConfig{}.ocp_config());
  EXPECT_TRUE(a.clean()) << (a.notes.empty() ? "" : a.notes.front());
  EXPECT_EQ(a.headway_violations, 0u);
  EXPECT_GT(a.min_gap, 0.0);
}

TEST_F(CorridorRun, TorqueRateHoldsAcrossCycleBoundaries) {
  const double dT = default_model().vehicle.dT_max * log_->dt;
  for (std::size_t i = 1; i < log_->steps.size(); ++i) {
    EXPECT_LE(std::abs(log_->steps[i].Tf - log_->steps[i - 1].Tf), dT + 1e-6);
    EXPECT_LE(std::abs(log_->steps[i].Tr - log_->steps[i - 1].Tr), dT + 1e-6);
  }
}

TEST_F(CorridorRun, SocRisesOnlyUnderRegen) {
  for (std::size_t i = 0; i + 1 < log_->steps.size(); ++i)
    if (log_->steps[i + 1].soc > log_->steps[i].soc) EXPECT_LT(log_->steps[i].I_bat, 0.0);
}

TEST_F(CorridorRun, UniformTimeAndMedianSolveBelowUpdate) {
  for (std::size_t i = 1; i < log_->steps.size(); ++i)
    EXPECT_NEAR(log_->steps[i].t - log_->steps[i - 1].t, log_->dt, 1e-9);
  const RunSummary s = summarize(*log_);
  RecordProperty("median_solve_s", std::to_string(s.median_solve_time));
  EXPECT_LT(s.median_solve_time, 1.0);
}

TEST_F(CorridorRun, CsvHasOneRowPerStep) {
  const auto path = std::filesystem::temp_directory_path() / "ecodrive_run_test.csv";
  write_run_csv(*log_, path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("t,d,v,soc,a,T_f,T_r,P_bat,F_b", 0), 0u);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, log_->steps.size());
  std::filesystem::remove(path);
}

bool same_except_wall_time(const RunLog& a, const RunLog& b) {
  if (a.steps.size() != b.steps.size() || a.cycles.size() != b.cycles.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto& x = a.steps[i];
    const auto& y = b.steps[i];
    if (x.d != y.d || x.v != y.v || x.soc != y.soc || x.Tf != y.Tf || x.Tr != y.Tr || x.Fb != y.Fb ||
        x.P_bat != y.P_bat || x.s1 != y.s1 || x.s2 != y.s2 || x.source != y.source)
      return false;
  }
  for (std::size_t i = 0; i < a.cycles.size(); ++i)
    if (a.cycles[i].iterations != b.cycles[i].iterations || a.cycles[i].shift != b.cycles[i].shift ||
        a.cycles[i].status != b.cycles[i].status)
      return false;
  return true;
}

TEST(ClosedLoop, SameSeedIsBitIdentical) {
  const auto& m = default_model();
  CorridorConfig cc;
  cc.duration = 30.0;
  const Scenario sc = generate_corridor_scenario(3, cc);
  MpcConfig c;
  c.seed = 5;
  c.noise.sigma = 0.5;
  c.noise.P_s = 1.0;
  const RunLog a = run_closed_loop(sc, m, c);
  const RunLog b = run_closed_loop(sc, m, c);
  EXPECT_TRUE(same_except_wall_time(a, b));
  c.seed = 6;
  const RunLog other = run_closed_loop(sc, m, c);
  EXPECT_FALSE(same_except_wall_time(a, other));
}

TEST(ClosedLoop, WarmStartNeedsFewerIterations) {
  const auto& m = default_model();
  CorridorConfig cc;
  cc.duration = 20.0;
  const Scenario sc = generate_corridor_scenario(2, cc);
  const auto median_iterations = [&](bool warm) {
    MpcConfig c;
    c.warm_start = warm;
    const RunLog log = run_closed_loop(sc, m, c);
    EXPECT_EQ(log.cycles.size(), 20u);
    std::vector<double> it;
    for (const auto& cy : log.cycles) it.push_back(cy.iterations);
    return median(it);
  };
  const double warm = median_iterations(true), cold = median_iterations(false);
  RecordProperty("warm_median_iterations", std::to_string(warm));
  RecordProperty("cold_median_iterations", std::to_string(cold));
  EXPECT_LT(warm, cold);
}

TEST(ClosedLoop, SolverFailureDegradesSafely) {
  const auto& m = default_model();
  const Scenario sc = cruise(40.0, 10.0, 12.0);
  MpcConfig c;
  c.solver.max_iter = 0;  // every solve ends non-optimal
  const RunLog log = run_closed_loop(sc, m, c);
  for (const auto& cy : log.cycles) EXPECT_NE(cy.source, StepSource::Optimal);
  const AuditReport a = audit_run(log, sc, m, c.ocp_config());
  EXPECT_EQ(a.collisions, 0u);
  EXPECT_EQ(a.rate_violations, 0u);
  EXPECT_EQ(a.hard_violations, 0u);
}

TEST(ClosedLoop, BmsHookCalledEveryCycle) {
  const auto& m = default_model();
  const Scenario sc = cruise(40.0, 10.0, 4.0);
  MpcConfig c;
  std::vector<double> times;
  c.bms = [&](double t, const BatteryParams& nominal) {
    times.push_back(t);
    return nominal;
  };
  const RunLog log = run_closed_loop(sc, m, c);
  ASSERT_EQ(times.size(), log.cycles.size());
  for (std::size_t i = 0; i < times.size(); ++i) EXPECT_DOUBLE_EQ(times[i], static_cast<double>(i));
}

TEST(Audit, FlagsRedCrossingAndCollision) {
  const auto& m = default_model();
  Scenario sc = cruise(100.0, 10.0, 1.0);
  sc.signals.emplace_back(1, 50.0, 60.0, std::vector<SignalSchedule::Window>{{30.0, 60.0}});  // red at t < 30
  RunLog log;
  log.dt = 0.1;
  RunStep a;
  a.t = 0.0;
  a.d = 49.5;
  a.v = 10.0;
  a.d_p = 100.0;
  log.steps.push_back(a);
  log.final_state = {50.5, 10.0, 0.8};
  AuditReport r = audit_run(log, sc, m, OcpConfig{});
  EXPECT_EQ(r.red_crossings, 1u);
  EXPECT_FALSE(r.safe());
  log.steps[0].d_p = 49.0;
  r = audit_run(log, sc, m, OcpConfig{});
  EXPECT_EQ(r.collisions, 1u);
}

TEST(Audit, FlagsTorqueRateJump) {
  const auto& m = default_model();
  const Scenario sc = cruise(100.0, 10.0, 1.0);
  RunLog log;
  log.dt = 0.1;
  RunStep a;
  a.d_p = 100.0;
  a.v = 5.0;
  a.soc = 0.8;
  log.steps.push_back(a);
  a.t = 0.1;
  a.d = 0.5;
  a.Tf = 20.0;
  a.Tr = 20.0;
  log.steps.push_back(a);
  log.final_state = {1.0, 5.0, 0.8};
  EXPECT_EQ(audit_run(log, sc, m, OcpConfig{}).rate_violations, 1u);
}

TEST(SafetyFilter, BrakesWhenClosingOnStoppedLeader) {
  const auto& m = default_model();
  OcpConfig cfg;
  const VehicleState x{0.0, 5.0, 0.8};
  Control u = control_for(1.0, 5.0, m);
  const Control prev = u;
  EXPECT_TRUE(detail::apply_safety_filter(u, prev, x, 0.0, 5.0, 0.0, m, cfg, 3.0, 0.1));
  EXPECT_GT(u.Fb, 0.0);
  const double a = acceleration_from_torque(u.Tf + u.Tr, u.Fb, x.v, 0.0, m.vehicle);
  EXPECT_GE(a, m.vehicle.a_min - 1e-9);
  EXPECT_LT(a, 0.0);
}

TEST(SafetyFilter, LeavesSafePlanAlone) {
  const auto& m = default_model();
  const VehicleState x{0.0, 10.0, 0.8};
  Control u = control_for(0.5, 10.0, m);
  const Control before = u;
  EXPECT_FALSE(detail::apply_safety_filter(u, before, x, 0.0, 40.0, 10.0, m, OcpConfig{}, 3.0, 0.1));
  EXPECT_EQ(u.Tf, before.Tf);
  EXPECT_EQ(u.Fb, before.Fb);
}

}  // namespace
}  // namespace ecodrive
