#include "ecodrive/battery.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace ecodrive {
namespace {

TEST(BatteryCurrent, ZeroPowerZeroCurrent) { EXPECT_EQ(battery_current(0.0, BatteryParams{}), 0.0); }

TEST(BatteryCurrent, ThirtySixKilowatts) {
  const BatteryParams b;
  const double expected = (360.0 - std::sqrt(96768.0)) / 0.456;
  EXPECT_NEAR(battery_current(36e3, b), expected, 1e-9 * expected);
  EXPECT_NEAR(expected, 107.3, 0.05);
}

TEST(BatteryCurrent, RegenGivesNegativeCurrent) {
  EXPECT_LT(battery_current(-20e3, BatteryParams{}), 0.0);
}

TEST(BatteryCurrent, DiscriminantBoundary) {
  const BatteryParams b;
  const double limit = 360.0 * 360.0 / (4.0 * 0.228);
  EXPECT_NEAR(b.max_power(), limit, 1e-9 * limit);
  EXPECT_NEAR(limit, 142.1e3, 50.0);
  EXPECT_NO_THROW((void)battery_current(limit * (1.0 - 1e-12), b));
  try {
    (void)battery_current(limit * 1.001, b);
    FAIL() << "expected PowerExceedsBatteryLimit";
  } catch (const PowerExceedsBatteryLimit& e) {
    EXPECT_NEAR(e.limit(), limit, 1e-6);
    EXPECT_GT(e.requested(), e.limit());
  }
}

TEST(BatteryCurrent, StrictlyIncreasingInPower) {
  const BatteryParams b;
  double prev = battery_current(-100e3, b);
  for (double P = -99e3; P < b.max_power(); P += 1e3) {
    const double I = battery_current(P, b);
    EXPECT_GT(I, prev);
    prev = I;
  }
}

TEST(BatteryCurrent, TerminalPowerRoundTrip) {
  const BatteryParams b;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> P(-120e3, 0.99 * b.max_power());
  for (int i = 0; i < 1000; ++i) {
    const double p = P(rng);
    const double I = battery_current(p, b);
    const double back = b.U_oc * I - I * I * b.R_b;
    EXPECT_NEAR(back, p, 1e-9 * std::max(1.0, std::abs(p)));
  }
}

TEST(SocStep, ZeroCurrentHoldsCharge) { EXPECT_EQ(soc_step(0.8, 0.0, 0.1, BatteryParams{}), 0.8); }

TEST(SocStep, DrainPerStep) {
  const BatteryParams b;
  EXPECT_EQ(b.C_bat, BatteryParams::from_amp_hours(150.0));
  const double drop = 0.8 - soc_step(0.8, 107.3, 0.1, b);
  EXPECT_NEAR(drop, 107.3 * 0.1 / 540000.0, 1e-15);
  EXPECT_NEAR(drop, 1.99e-5, 5e-8);
}

TEST(SocStep, RegenRaisesCharge) { EXPECT_GT(soc_step(0.5, -40.0, 0.1, BatteryParams{}), 0.5); }

TEST(SocStep, LinearInCurrentAndStep) {
  const BatteryParams b;
  const double base = 0.6 - soc_step(0.6, 50.0, 0.1, b);
  EXPECT_NEAR(0.6 - soc_step(0.6, 100.0, 0.1, b), 2.0 * base, 1e-15);
  EXPECT_NEAR(0.6 - soc_step(0.6, 50.0, 0.3, b), 3.0 * base, 1e-15);
  EXPECT_THROW((void)soc_step(0.6, 50.0, 0.0, b), std::invalid_argument);
}

TEST(BatteryParams, Validation) {
  BatteryParams b;
  EXPECT_NO_THROW(b.validate());
  b.soc_min = 0.9;
  b.soc_max = 0.8;
  EXPECT_THROW(b.validate(), std::invalid_argument);
  b = BatteryParams{};
  b.R_b = 0.0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace ecodrive
