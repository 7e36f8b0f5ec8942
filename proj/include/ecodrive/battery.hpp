#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace ecodrive {

/// Equivalent-resistance pack. Capacity is held in ampere-seconds; use
/// `from_amp_hours` when reading a rated A*h figure.
struct BatteryParams {
  double U_oc = 360.0;            // V
  double R_b = 0.228;             // ohm
  double C_bat = 150.0 * 3600.0;  // A*s
  double soc_min = 0.0;
  double soc_max = 1.0;

  static constexpr double from_amp_hours(double ah) { return ah * 3600.0; }

  /// Largest power the pack can deliver (the current equation has no real
  /// root beyond this).
  [[nodiscard]] double max_power() const { return U_oc * U_oc / (4.0 * R_b); }

  void validate() const {
    if (!(U_oc > 0.0)) throw std::invalid_argument("BatteryParams: U_oc must be positive");
    if (!(R_b > 0.0)) throw std::invalid_argument("BatteryParams: R_b must be positive");
    if (!(C_bat > 0.0)) throw std::invalid_argument("BatteryParams: C_bat must be positive");
    if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0))
      throw std::invalid_argument("BatteryParams: need 0 <= soc_min < soc_max <= 1");
  }
};

class PowerExceedsBatteryLimit : public std::runtime_error {
 public:
  PowerExceedsBatteryLimit(double requested, double limit)
      : std::runtime_error("battery power " + std::to_string(requested) +
                           " W exceeds pack limit " + std::to_string(limit) + " W"),
        requested_(requested),
        limit_(limit) {}

  [[nodiscard]] double requested() const { return requested_; }
  [[nodiscard]] double limit() const { return limit_; }

 private:
  double requested_;
  double limit_;
};

/// Terminal current for a battery-side power demand; negative for charging.
[[nodiscard]] inline double battery_current(double P_bat, const BatteryParams& b) {
  const double disc = b.U_oc * b.U_oc - 4.0 * P_bat * b.R_b;
  if (disc < 0.0) throw PowerExceedsBatteryLimit(P_bat, b.max_power());
  return (b.U_oc - std::sqrt(disc)) / (2.0 * b.R_b);
}

[[nodiscard]] inline double soc_step(double soc, double I_bat, double dt, const BatteryParams& b) {
  if (!(dt > 0.0)) throw std::invalid_argument("soc_step: dt must be positive");
  return soc - I_bat * dt / b.C_bat;
}

/// Called once per control cycle with the cycle start time; may rewrite the
/// pack parameters that hold for the coming horizon.
using BmsUpdateHook = std::function<void(double t, BatteryParams&)>;

}  // namespace ecodrive
