#include "ecodrive/baseline.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace ecodrive {
namespace {

using namespace oracle;

Scenario from_speeds(const std::vector<double>& v, double dt = 0.1) {
  Scenario s;
  double d = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double a = k + 1 < v.size() ? (v[k + 1] - v[k]) / dt : 0.0;
    s.samples.push_back({static_cast<double>(k) * dt, d, v[k], a});
    d += v[k] * dt;
  }
  return s;
}

TEST(RuleSplit, EvenSplit) {
  const auto s = rule_based_split(300.0, {}, 220.0, 220.0);
  EXPECT_DOUBLE_EQ(s.Tf, 150.0);
  EXPECT_DOUBLE_EQ(s.Tr, 150.0);
}

TEST(RuleSplit, OverflowGoesToOtherMotor) {
  const auto s = rule_based_split(500.0, {}, 200.0, 350.0);
  EXPECT_DOUBLE_EQ(s.Tf, 200.0);
  EXPECT_DOUBLE_EQ(s.Tr, 300.0);
  const auto r = rule_based_split(500.0, {}, 350.0, 200.0);
  EXPECT_DOUBLE_EQ(r.Tf, 300.0);
  EXPECT_DOUBLE_EQ(r.Tr, 200.0);
}

TEST(RuleSplit, RegenSplitIsSymmetric) {
  const auto s = rule_based_split(-200.0, {}, 220.0, 220.0);
  EXPECT_DOUBLE_EQ(s.Tf, -100.0);
  EXPECT_DOUBLE_EQ(s.Tr, -100.0);
}

TEST(RuleSplit, RejectsExcessDemandAndBadRatio) {
  EXPECT_THROW((void)rule_based_split(441.0, {}, 220.0, 220.0), SplitOverflowError);
  EXPECT_THROW((void)rule_based_split(-441.0, {}, 220.0, 220.0), SplitOverflowError);
  EXPECT_THROW((void)rule_based_split(10.0, {0.0, 0.0}, 220.0, 220.0), std::invalid_argument);
  EXPECT_THROW((void)rule_based_split(10.0, {-1.0, 2.0}, 220.0, 220.0), std::invalid_argument);
}

TEST(RuleSplit, SumExactAndWithinEnvelopesForRandomDemands) {
  const auto& pt = default_model().powertrain;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double w = 1400.0 * U(rng);
    const double ef = max_torque_envelope(pt.front, w);
    const double er = max_torque_envelope(pt.rear, w);
    const double T = (2.0 * U(rng) - 1.0) * (ef + er);
    const SplitRatio r{3.0 * U(rng), 3.0 * U(rng) + 0.01};
    const auto s = rule_based_split(T, r, w, pt);
    EXPECT_NEAR(s.Tf + s.Tr, T, 1e-12 * std::max(1.0, std::abs(T)));
    EXPECT_LE(std::abs(s.Tf), ef * (1.0 + 1e-12));
    EXPECT_LE(std::abs(s.Tr), er * (1.0 + 1e-12));
    EXPECT_GE(s.Tf * s.Tr, 0.0);
  }
}

TEST(OptimalSplit, IdenticalMotorsMatchEvenSplit) {
  const Powertrain pt = Powertrain::build(default_rear_pmsm(), default_rear_pmsm());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double w = 50.0 + 400.0 * U(rng);
    const double e = max_torque_envelope(pt.front, w);
    const double T = (2.0 * U(rng) - 1.0) * 1.6 * e;
    const auto opt = optimal_split(T, w, pt);
    const auto rule = rule_based_split(T, {}, w, pt);
    const double P_rule = pt.poly_front(w, rule.Tf) + pt.poly_rear(w, rule.Tr);
    EXPECT_LE(opt.P, P_rule + 1e-9);
    EXPECT_NEAR(opt.P, P_rule, 5e-3 * std::max(1000.0, std::abs(P_rule))) << "w=" << w << " T=" << T;
  }
}

TEST(OptimalSplit, BeatsRuleAndMatchesGridOracle) {
  const auto& pt = default_model().powertrain;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int within = 0;
  int better_than_rule = 0;
  constexpr int kPoints = 500;
  for (int i = 0; i < kPoints; ++i) {
    const double w = 20.0 + 440.0 * U(rng);
    const double cap = max_torque_envelope(pt.front, w) + max_torque_envelope(pt.rear, w);
    const double T = (2.0 * U(rng) - 1.0) * cap;
    const auto opt = optimal_split(T, w, pt);
    EXPECT_NEAR(opt.Tf + opt.Tr, T, 1e-9);
    EXPECT_GE(opt.Tf * opt.Tr, 0.0);
    const auto rule = rule_based_split(T, {}, w, pt);
    const double P_rule = pt.poly_front(w, rule.Tf) + pt.poly_rear(w, rule.Tr);
    const double P_grid = grid_power(T, w, pt);
    EXPECT_LE(opt.P, P_grid + 1e-6);
    if (opt.P <= P_rule + 1e-9) ++better_than_rule;
    if (std::abs(opt.P - P_grid) <= 0.02 * std::max(std::abs(P_grid), 1.0)) ++within;
  }
  RecordProperty("within_2pct", within);
  EXPECT_EQ(better_than_rule, kPoints);
  EXPECT_GE(within, 95 * kPoints / 100);
}

TEST(Baseline, StandstillDrainsOnlyHoldingLosses) {
  const auto& m = default_model();
  const Scenario sc = from_speeds(std::vector<double>(101, 0.0));
  const auto rep = baseline_run(sc, m);
  ASSERT_EQ(rep.log.steps.size(), 100u);
  const double T = torque_from_acceleration(0.0, 0.0, 0.0, 0.0, m.vehicle);
  const double P = m.powertrain.poly_front(0.0, 0.5 * T) + m.powertrain.poly_rear(0.0, 0.5 * T);
  double soc = 0.8;
  for (int k = 0; k < 100; ++k) soc = soc_step(soc, battery_current(P, m.battery), 0.1, m.battery);
  EXPECT_DOUBLE_EQ(rep.log.final_state.soc, soc);
  EXPECT_LT(rep.log.final_state.soc, 0.8);
  for (const auto& s : rep.log.steps) EXPECT_EQ(s.Fb, 0.0);
}

TEST(Baseline, MildDecelerationUsesNoFrictionBrake) {
  std::vector<double> v;
  for (int k = 0; k <= 100; ++k) v.push_back(15.0 - 0.05 * k);  // -0.5 m/s^2
  const auto rep = baseline_run(from_speeds(v), default_model());
  bool regen = false;
  for (const auto& s : rep.log.steps) {
    EXPECT_EQ(s.Fb, 0.0);
    regen = regen || s.P_bat < 0.0;
  }
  EXPECT_TRUE(regen);
}

TEST(Baseline, HardBrakingBeyondRegenUsesFrictionBrake) {
  std::vector<double> v;
  for (int k = 0; k <= 30; ++k) v.push_back(std::max(0.0, 20.0 - 0.8 * k));  // -8 m/s^2
  const auto& m = default_model();
  const auto rep = baseline_run(from_speeds(v), m);
  double brake = 0.0;
  for (const auto& s : rep.log.steps) {
    brake = std::max(brake, s.Fb);
    // Motor and brake together reproduce the replayed acceleration.
    EXPECT_NEAR(acceleration_from_torque(s.Tf + s.Tr, s.Fb, s.v, 0.0, m.vehicle), s.a, 1e-9);
  }
  EXPECT_GT(brake, 0.0);
}

TEST(Baseline, Deterministic) {
  const Scenario sc = generate_corridor_scenario(2);
  const auto a = baseline_run(sc, default_model());
  const auto b = baseline_run(sc, default_model());
  ASSERT_EQ(a.log.steps.size(), b.log.steps.size());
  for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
    EXPECT_EQ(a.log.steps[i].soc, b.log.steps[i].soc);
    EXPECT_EQ(a.log.steps[i].Tf, b.log.steps[i].Tf);
  }
  EXPECT_EQ(a.log.final_state.soc, b.log.final_state.soc);
}

TEST(Baseline, StepLimitTruncatesReplay) {
  const Scenario sc = generate_corridor_scenario(2);
  const auto rep = baseline_run(sc, default_model(), 0.8, {}, 250);
  EXPECT_EQ(rep.log.steps.size(), 250u);
  EXPECT_DOUBLE_EQ(rep.log.final_state.d, sc.samples[250].d_p);
}

TEST(Metrics, RSocArithmetic) {
  EXPECT_DOUBLE_EQ(compute_r_soc(0.75, 0.75, 0.8), 0.0);
  EXPECT_NEAR(compute_r_soc(0.78, 0.75, 0.8), 60.0, 1e-9);
  EXPECT_THROW((void)compute_r_soc(0.8, 0.8, 0.8), std::domain_error);
}

TEST(Metrics, RmArithmetic) {
  EXPECT_DOUBLE_EQ(compute_r_m(10.0, 10.0), 0.0);
  EXPECT_NEAR(compute_r_m(10.0, 9.6), 4.0, 1e-9);
  EXPECT_THROW((void)compute_r_m(0.0, 1.0), std::domain_error);
}

TEST(Metrics, RuleResplitOfRuleRunIsZeroImprovement) {
  const auto& m = default_model();
  const Scenario sc = generate_corridor_scenario(5);
  const auto rep = baseline_run(sc, m);
  const double E = traction_energy(rep.log);
  EXPECT_NEAR(rule_split_energy(rep.log, m), E, 1e-9 * std::abs(E));
  EXPECT_NEAR(compute_r_m(rule_split_energy(rep.log, m), E), 0.0, 1e-9);
}

}  // namespace
}  // namespace ecodrive
