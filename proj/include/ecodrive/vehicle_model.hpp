#pragma once

#include <cmath>
#include <stdexcept>

namespace ecodrive {

/// Longitudinal vehicle constants.
///
/// Defaults describe a mid-size dual-motor sedan. `k_w` is derived from the
/// drag coefficient, air density and frontal area and is kept in sync by
/// `set_drag()`; do not assign it directly.
struct VehicleParams {
  double m = 1780.0;        // kg
  double g = 9.81;          // m/s^2
  double C_D = 0.306;       // -
  double rho_a = 1.205;     // kg/m^3
  double A = 2.200;         // m^2
  double k_w = 0.306 * 1.205 * 2.200;  // kg/m
  double mu_r = 0.009;      // -
  double n = 22.910;        // rad/m, final drive ratio over tire radius
  double F_b_max = 15000.0; // N
  double a_min = -3.0;      // m/s^2
  double a_max = 3.0;       // m/s^2
  double v_max = 20.0;      // m/s
  double j_max = 3.0;       // m/s^3, recorded only; torque rate is enforced
  double dT_max = 150.0;    // N*m/s per motor
  double omega_max = 1400.0;  // rad/s

  void set_drag(double drag_coeff, double air_density, double frontal_area) {
    C_D = drag_coeff;
    rho_a = air_density;
    A = frontal_area;
    k_w = C_D * rho_a * A;
  }

  void validate() const {
    if (!(m > 0.0)) throw std::invalid_argument("VehicleParams: m must be positive");
    if (!(n > 0.0)) throw std::invalid_argument("VehicleParams: n must be positive");
    if (k_w != C_D * rho_a * A)
      throw std::invalid_argument("VehicleParams: k_w must equal C_D*rho_a*A");
    if (!(a_min < 0.0 && a_max > 0.0))
      throw std::invalid_argument("VehicleParams: need a_min < 0 < a_max");
    if (!(F_b_max > 0.0)) throw std::invalid_argument("VehicleParams: F_b_max must be positive");
    if (!(v_max > 0.0)) throw std::invalid_argument("VehicleParams: v_max must be positive");
    if (!(dT_max > 0.0)) throw std::invalid_argument("VehicleParams: dT_max must be positive");
    if (!(omega_max > 0.0)) throw std::invalid_argument("VehicleParams: omega_max must be positive");
  }
};

struct RoadLoad {
  double F_g = 0.0;  // grade, N
  double F_r = 0.0;  // rolling, N
  double F_a = 0.0;  // aerodynamic, N

  [[nodiscard]] double total() const { return F_g + F_r + F_a; }
};

[[nodiscard]] inline RoadLoad resistive_forces(double v, double phi, const VehicleParams& p) {
  return {p.m * p.g * std::sin(phi), p.mu_r * p.m * p.g * std::cos(phi), 0.5 * p.k_w * v * v};
}

/// Acceleration produced by total motor torque `T_m` with friction brake
/// force `F_b` acting against the motion.
[[nodiscard]] inline double acceleration_from_torque(double T_m, double F_b, double v, double phi,
                                                     const VehicleParams& p) {
  const RoadLoad load = resistive_forces(v, phi, p);
  return (p.n * T_m - load.F_g - load.F_r - load.F_a - F_b) / p.m;
}

[[nodiscard]] inline double torque_from_acceleration(double a, double v, double phi, double F_b,
                                                     const VehicleParams& p) {
  const RoadLoad load = resistive_forces(v, phi, p);
  return (p.m * a + load.F_g + load.F_r + load.F_a + F_b) / p.n;
}

/// Both motors share this speed (no slip, fixed ratio).
[[nodiscard]] inline double motor_speed(double v, const VehicleParams& p) { return p.n * v; }

}  // namespace ecodrive
