#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecodrive/csv.hpp"
#include "ecodrive/vehicle_model.hpp"

namespace ecodrive {

enum class MotorKind { IM, PMSM };

inline const char* to_string(MotorKind kind) { return kind == MotorKind::IM ? "IM" : "PMSM"; }

/// P_loss(w, T) = c0 + c1|w| + c2 w^2 + c3 T^2 + c4 |w T|
/// (inverter standby, iron hysteresis, eddy/windage, copper, speed-torque
/// proportional losses).
struct LossModel {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;

  [[nodiscard]] double operator()(double omega, double T) const {
    return c0 + c1 * std::abs(omega) + c2 * omega * omega + c3 * T * T + c4 * std::abs(omega * T);
  }
};

struct MotorSpec {
  MotorKind kind = MotorKind::PMSM;
  double T_stall = 220.0;     // N*m
  double P_rated = 150.0e3;   // W
  double omega_max = 1400.0;  // rad/s
  LossModel loss;
  double omega_step = 10.0;   // map grid, rad/s
  double torque_step = 5.0;   // map grid, N*m

  void validate() const {
    if (!(T_stall > 0.0)) throw std::invalid_argument("MotorSpec: T_stall must be positive");
    if (!(P_rated > 0.0)) throw std::invalid_argument("MotorSpec: P_rated must be positive");
    if (!(omega_max > 0.0)) throw std::invalid_argument("MotorSpec: omega_max must be positive");
    if (!(omega_step > 0.0 && torque_step > 0.0))
      throw std::invalid_argument("MotorSpec: grid steps must be positive");
  }
};

/// Front induction motor: more torque, lower part-load efficiency.
inline MotorSpec default_front_im() {
  MotorSpec s;
  s.kind = MotorKind::IM;
  s.T_stall = 280.0;
  s.P_rated = 160.0e3;
  s.loss = {150.0, 0.5, 0.0015, 0.120, 0.030};
  return s;
}

/// Rear permanent-magnet motor: more efficient through the urban speed range.
inline MotorSpec default_rear_pmsm() {
  MotorSpec s;
  s.kind = MotorKind::PMSM;
  s.T_stall = 220.0;
  s.P_rated = 150.0e3;
  s.loss = {100.0, 0.6, 0.0016, 0.030, 0.020};
  return s;
}

inline constexpr double kEnvelopeOmegaFloor = 1.0;  // rad/s

/// Symmetric torque limit: constant-torque plateau, then constant power.
[[nodiscard]] inline double max_torque_envelope(const MotorSpec& spec, double omega) {
  if (!(omega >= 0.0 && omega <= spec.omega_max))
    throw std::out_of_range("max_torque_envelope: omega " + std::to_string(omega) +
                            " outside [0, omega_max]");
  return std::min(spec.T_stall, spec.P_rated / std::max(omega, kEnvelopeOmegaFloor));
}

/// Efficiency from a battery-side power sample. Propelling: wT / p,
/// braking: p / (wT). Empty where no efficiency is defined (wT == 0, or a
/// braking point whose losses exceed the recovered power).
[[nodiscard]] inline std::optional<double> efficiency_from_power(double omega, double T,
                                                                 double p_elec) {
  const double mech = omega * T;
  if (mech == 0.0) return std::nullopt;
  if (mech > 0.0) {
    if (!(p_elec > 0.0)) return std::nullopt;
    return mech / p_elec;
  }
  if (!(p_elec < 0.0)) return std::nullopt;
  return p_elec / mech;
}

[[nodiscard]] inline std::optional<double> efficiency_at(const MotorSpec& spec, double omega,
                                                         double T) {
  if (!(omega >= 0.0 && omega <= spec.omega_max && std::abs(T) <= spec.T_stall))
    throw std::out_of_range("efficiency_at: query outside motor domain");
  return efficiency_from_power(omega, T, omega * T + spec.loss(omega, T));
}

/// Tabulated battery-side power and efficiency on a regular (w, T) grid.
/// Rows index speed, columns index torque. Points beyond the torque envelope
/// are marked infeasible and carry NaN.
struct EfficiencyMap {
  std::vector<double> omega_grid;
  std::vector<double> torque_grid;
  Eigen::MatrixXd p_elec;
  Eigen::MatrixXd eta;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> feasible;

  [[nodiscard]] bool in_domain(double omega, double T) const {
    return !omega_grid.empty() && !torque_grid.empty() && omega >= omega_grid.front() &&
           omega <= omega_grid.back() && T >= torque_grid.front() && T <= torque_grid.back();
  }

  /// Bilinear interpolation of p_elec. Throws outside the grid or when a
  /// neighbouring node is infeasible.
  [[nodiscard]] double power_at(double omega, double T) const {
    if (!in_domain(omega, T)) throw std::out_of_range("EfficiencyMap: query outside map domain");
    const auto bracket = [](const std::vector<double>& g, double x) {
      auto it = std::upper_bound(g.begin(), g.end(), x);
      std::size_t hi = static_cast<std::size_t>(it - g.begin());
      if (hi >= g.size()) hi = g.size() - 1;
      if (hi == 0) hi = 1;
      const std::size_t lo = hi - 1;
      const double t = (x - g[lo]) / (g[hi] - g[lo]);
      return std::pair{lo, t};
    };
    const auto [i, ti] = bracket(omega_grid, omega);
    const auto [j, tj] = bracket(torque_grid, T);
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    if (!(feasible(ii, jj) && feasible(ii + 1, jj) && feasible(ii, jj + 1) &&
          feasible(ii + 1, jj + 1)))
      throw std::out_of_range("EfficiencyMap: query in infeasible cell");
    return (1 - ti) * (1 - tj) * p_elec(ii, jj) + ti * (1 - tj) * p_elec(ii + 1, jj) +
           (1 - ti) * tj * p_elec(ii, jj + 1) + ti * tj * p_elec(ii + 1, jj + 1);
  }
};

[[nodiscard]] inline std::optional<double> efficiency_at(const EfficiencyMap& map, double omega,
                                                         double T) {
  return efficiency_from_power(omega, T, map.power_at(omega, T));
}

namespace detail {

inline std::vector<double> linspace_by_step(double lo, double hi, double step) {
  const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

}  // namespace detail

[[nodiscard]] inline EfficiencyMap generate_motor_map(const MotorSpec& spec) {
  spec.validate();
  EfficiencyMap map;
  map.omega_grid = detail::linspace_by_step(0.0, spec.omega_max, spec.omega_step);
  map.torque_grid = detail::linspace_by_step(-spec.T_stall, spec.T_stall, spec.torque_step);
  const auto rows = static_cast<Eigen::Index>(map.omega_grid.size());
  const auto cols = static_cast<Eigen::Index>(map.torque_grid.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  map.p_elec.setConstant(rows, cols, nan);
  map.eta.setConstant(rows, cols, nan);
  map.feasible.setConstant(rows, cols, false);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double w = map.omega_grid[static_cast<std::size_t>(i)];
    const double t_max = max_torque_envelope(spec, w);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double T = map.torque_grid[static_cast<std::size_t>(j)];
      if (std::abs(T) > t_max + 1e-9) continue;
      map.feasible(i, j) = true;
      const double p = w * T + spec.loss(w, T);
      map.p_elec(i, j) = p;
      if (auto eta = efficiency_from_power(w, T, p)) {
        if (!(*eta < 1.0))
          throw std::invalid_argument("generate_motor_map: loss model yields efficiency >= 1 at w=" +
                                      std::to_string(w) + ", T=" + std::to_string(T));
        map.eta(i, j) = *eta;
      }
    }
  }
  return map;
}

/// Value and derivatives of p(w, T).
struct PolyEval {
  double p = 0.0;
  double dw = 0.0;
  double dT = 0.0;
  double dww = 0.0;
  double dwT = 0.0;
  double dTT = 0.0;
};

/// Bivariate polynomial of bounded total degree in normalised coordinates
///   u = (w - w_center) / w_half,  t = (T - T_center) / T_half,
/// so that the fit domain maps onto [-1, 1]^2. Monomials are ordered by total
/// degree, then by descending power of u: 1, u, t, u^2, u t, t^2, ...
class PowerPolynomial {
 public:
  struct Domain {
    double omega_lo = 0.0;
    double omega_hi = 1.0;
    double torque_lo = -1.0;
    double torque_hi = 1.0;
  };

  static constexpr int kMaxDegree = 8;

  PowerPolynomial() = default;
  PowerPolynomial(int degree, Domain domain, Eigen::VectorXd coeffs)
      : degree_(degree), domain_(domain), coeffs_(std::move(coeffs)) {
    if (degree_ < 0 || degree_ > kMaxDegree)
      throw std::invalid_argument("PowerPolynomial: unsupported degree");
    if (coeffs_.size() != num_terms(degree_))
      throw std::invalid_argument("PowerPolynomial: coefficient count does not match degree");
    if (!(domain_.omega_hi > domain_.omega_lo && domain_.torque_hi > domain_.torque_lo))
      throw std::invalid_argument("PowerPolynomial: empty domain");
  }

  static constexpr Eigen::Index num_terms(int degree) {
    return static_cast<Eigen::Index>((degree + 1) * (degree + 2) / 2);
  }

  [[nodiscard]] int degree() const { return degree_; }
  [[nodiscard]] const Domain& domain() const { return domain_; }
  [[nodiscard]] const Eigen::VectorXd& coeffs() const { return coeffs_; }
  [[nodiscard]] double rmse() const { return rmse_; }
  [[nodiscard]] double peak_abs_power() const { return peak_abs_power_; }
  void set_fit_stats(double rmse, double peak) {
    rmse_ = rmse;
    peak_abs_power_ = peak;
  }

  [[nodiscard]] bool in_domain(double omega, double T, double tol = 1e-9) const {
    const double tw = tol * std::max(1.0, domain_.omega_hi - domain_.omega_lo);
    const double tt = tol * std::max(1.0, domain_.torque_hi - domain_.torque_lo);
    return omega >= domain_.omega_lo - tw && omega <= domain_.omega_hi + tw &&
           T >= domain_.torque_lo - tt && T <= domain_.torque_hi + tt;
  }

  [[nodiscard]] double u_of(double omega) const { return (omega - w_center()) / w_half(); }
  [[nodiscard]] double t_of(double T) const { return (T - t_center()) / t_half(); }

  /// Monomial values at normalised (u, t), in coefficient order.
  static void basis(int degree, double u, double t, std::span<double> out) {
    std::array<double, kMaxDegree + 1> up{}, tp{};
    up[0] = tp[0] = 1.0;
    for (int k = 1; k <= degree; ++k) {
      up[k] = up[k - 1] * u;
      tp[k] = tp[k - 1] * t;
    }
    std::size_t idx = 0;
    for (int d = 0; d <= degree; ++d)
      for (int i = d; i >= 0; --i) out[idx++] = up[i] * tp[d - i];
  }

  [[nodiscard]] double operator()(double omega, double T) const { return eval(omega, T).p; }

  [[nodiscard]] PolyEval eval(double omega, double T) const {
    const double u = u_of(omega);
    const double t = t_of(T);
    std::array<double, kMaxDegree + 1> up{}, tp{};
    up[0] = tp[0] = 1.0;
    for (int k = 1; k <= degree_; ++k) {
      up[k] = up[k - 1] * u;
      tp[k] = tp[k - 1] * t;
    }
    PolyEval r;
    Eigen::Index idx = 0;
    for (int d = 0; d <= degree_; ++d) {
      for (int i = d; i >= 0; --i) {
        const int j = d - i;
        const double c = coeffs_[idx++];
        r.p += c * up[i] * tp[j];
        if (i >= 1) r.dw += c * i * up[i - 1] * tp[j];
        if (j >= 1) r.dT += c * j * up[i] * tp[j - 1];
        if (i >= 2) r.dww += c * i * (i - 1) * up[i - 2] * tp[j];
        if (i >= 1 && j >= 1) r.dwT += c * i * j * up[i - 1] * tp[j - 1];
        if (j >= 2) r.dTT += c * j * (j - 1) * up[i] * tp[j - 2];
      }
    }
    const double sw = 1.0 / w_half();
    const double st = 1.0 / t_half();
    r.dw *= sw;
    r.dT *= st;
    r.dww *= sw * sw;
    r.dwT *= sw * st;
    r.dTT *= st * st;
    return r;
  }

 private:
  [[nodiscard]] double w_center() const { return 0.5 * (domain_.omega_lo + domain_.omega_hi); }
  [[nodiscard]] double w_half() const { return 0.5 * (domain_.omega_hi - domain_.omega_lo); }
  [[nodiscard]] double t_center() const { return 0.5 * (domain_.torque_lo + domain_.torque_hi); }
  [[nodiscard]] double t_half() const { return 0.5 * (domain_.torque_hi - domain_.torque_lo); }

  int degree_ = 0;
  Domain domain_{};
  Eigen::VectorXd coeffs_ = Eigen::VectorXd::Zero(1);
  double rmse_ = 0.0;
  double peak_abs_power_ = 0.0;
};

struct PowerSample {
  double omega = 0.0;
  double T = 0.0;
  double p_elec = 0.0;
};

/// Least-squares fit of battery-side power over scattered samples.
[[nodiscard]] inline PowerPolynomial fit_power_polynomial(std::span<const PowerSample> samples,
                                                          PowerPolynomial::Domain domain,
                                                          int degree = 5) {
  const Eigen::Index terms = PowerPolynomial::num_terms(degree);
  if (static_cast<Eigen::Index>(samples.size()) < terms)
    throw std::invalid_argument("fit_power_polynomial: fewer samples than polynomial terms");
  const PowerPolynomial shape(degree, domain, Eigen::VectorXd::Zero(terms));
  Eigen::MatrixXd V(static_cast<Eigen::Index>(samples.size()), terms);
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  std::vector<double> row(static_cast<std::size_t>(terms));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    PowerPolynomial::basis(degree, shape.u_of(samples[k].omega), shape.t_of(samples[k].T), row);
    V.row(static_cast<Eigen::Index>(k)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), terms);
    y[static_cast<Eigen::Index>(k)] = samples[k].p_elec;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
  qr.setThreshold(1e-12);
  if (qr.rank() < terms)
    throw std::runtime_error("fit_power_polynomial: rank-deficient design (grid too small)");
  Eigen::VectorXd c = qr.solve(y);
  const Eigen::VectorXd resid = V * c - y;
  PowerPolynomial poly(degree, domain, std::move(c));
  poly.set_fit_stats(std::sqrt(resid.squaredNorm() / static_cast<double>(samples.size())),
                     y.cwiseAbs().maxCoeff());
  return poly;
}

/// Samples the feasible nodes of a map (both torque signs) and fits one
/// polynomial across propelling and regenerating quadrants.
[[nodiscard]] inline PowerPolynomial fit_power_polynomial(const EfficiencyMap& map,
                                                          int degree = 5) {
  if (map.torque_grid.empty() || !(map.torque_grid.front() < 0.0 && map.torque_grid.back() > 0.0))
    throw std::invalid_argument("fit_power_polynomial: map must cover both torque signs");
  std::vector<PowerSample> samples;
  for (Eigen::Index i = 0; i < map.p_elec.rows(); ++i)
    for (Eigen::Index j = 0; j < map.p_elec.cols(); ++j)
      if (map.feasible(i, j))
        samples.push_back({map.omega_grid[static_cast<std::size_t>(i)],
                           map.torque_grid[static_cast<std::size_t>(j)], map.p_elec(i, j)});
  const PowerPolynomial::Domain dom{map.omega_grid.front(), map.omega_grid.back(),
                                    map.torque_grid.front(), map.torque_grid.back()};
  return fit_power_polynomial(samples, dom, degree);
}

/// Both motors, their envelopes, and the fitted battery-side power models.
struct Powertrain {
  MotorSpec front;
  MotorSpec rear;
  PowerPolynomial poly_front;
  PowerPolynomial poly_rear;

  static Powertrain build(const MotorSpec& front, const MotorSpec& rear, int degree = 5) {
    return {front, rear, fit_power_polynomial(generate_motor_map(front), degree),
            fit_power_polynomial(generate_motor_map(rear), degree)};
  }

  static Powertrain make_default() { return build(default_front_im(), default_rear_pmsm()); }
};

class DomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Battery-side traction power for a front/rear torque pair at vehicle speed v.
[[nodiscard]] inline double electrical_power(const PowerPolynomial& poly_f,
                                             const PowerPolynomial& poly_r, double T_f, double T_r,
                                             double v, const VehicleParams& p) {
  const double w = motor_speed(v, p);
  if (!poly_f.in_domain(w, T_f)) throw DomainError("electrical_power: front query outside fit domain");
  if (!poly_r.in_domain(w, T_r)) throw DomainError("electrical_power: rear query outside fit domain");
  return poly_f(w, T_f) + poly_r(w, T_r);
}

[[nodiscard]] inline double electrical_power(const Powertrain& pt, double T_f, double T_r, double v,
                                             const VehicleParams& p) {
  return electrical_power(pt.poly_front, pt.poly_rear, T_f, T_r, v, p);
}

/// Writes `omega,T,p_elec,eta` for every feasible node; masked efficiencies
/// are left empty.
inline void write_map_csv(const EfficiencyMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "omega,T,p_elec,eta\n";
  for (Eigen::Index i = 0; i < map.p_elec.rows(); ++i)
    for (Eigen::Index j = 0; j < map.p_elec.cols(); ++j) {
      if (!map.feasible(i, j)) continue;
      out << map.omega_grid[static_cast<std::size_t>(i)] << ','
          << map.torque_grid[static_cast<std::size_t>(j)] << ',' << map.p_elec(i, j) << ',';
      if (!std::isnan(map.eta(i, j))) out << map.eta(i, j);
      out << '\n';
    }
}

[[nodiscard]] inline EfficiencyMap read_map_csv(const std::string& path) {
  const CsvTable table = read_csv(path, {"omega", "T", "p_elec", "eta"});
  std::map<double, std::size_t> ws, ts;
  for (const auto& r : table.rows) {
    ws.emplace(r[0].value(), 0);
    ts.emplace(r[1].value(), 0);
  }
  EfficiencyMap map;
  for (auto& [w, idx] : ws) {
    idx = map.omega_grid.size();
    map.omega_grid.push_back(w);
  }
  for (auto& [t, idx] : ts) {
    idx = map.torque_grid.size();
    map.torque_grid.push_back(t);
  }
  const auto rows = static_cast<Eigen::Index>(map.omega_grid.size());
  const auto cols = static_cast<Eigen::Index>(map.torque_grid.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  map.p_elec.setConstant(rows, cols, nan);
  map.eta.setConstant(rows, cols, nan);
  map.feasible.setConstant(rows, cols, false);
  for (const auto& r : table.rows) {
    const auto i = static_cast<Eigen::Index>(ws.at(r[0].value()));
    const auto j = static_cast<Eigen::Index>(ts.at(r[1].value()));
    map.feasible(i, j) = true;
    map.p_elec(i, j) = r[2].value();
    if (r[3]) map.eta(i, j) = *r[3];
  }
  return map;
}

}  // namespace ecodrive
