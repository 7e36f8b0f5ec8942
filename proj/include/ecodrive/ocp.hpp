#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecodrive/battery.hpp"
#include "ecodrive/interior_point.hpp"
#include "ecodrive/nlp.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/traffic.hpp"
#include "ecodrive/vehicle_model.hpp"

namespace ecodrive {

/// Everything the controller knows about the vehicle.
struct EvModel {
  VehicleParams vehicle;
  BatteryParams battery;
  Powertrain powertrain = Powertrain::make_default();

  void validate() const {
    vehicle.validate();
    battery.validate();
    powertrain.front.validate();
    powertrain.rear.validate();
  }
};

struct OcpWeights {
  double w1 = 31.622776601683793;  // acceleration, 10^1.5
  double w2 = 1e-3;                // battery power
  double w3 = 10.0;                // terminal gap
  double w4 = 100.0;               // terminal speed
  double w5 = 1.0;                 // far slack
  double w6 = 1.0;                 // near slack
};

struct OcpConfig {
  std::size_t N = 150;
  double dt = 0.1;
  OcpWeights w;
  double h_head = 2.5;  // s, terminal headway target
  double h_min = 0.5;   // s, safety headway
  double d_max = 80.0;  // m
  double d_min = 1.0;   // m
  bool terminal_gap = true;
  bool terminal_speed = true;
  double signal_stop_margin = 1.0;     // m kept before a red stop line
  double signal_pass_clearance = 1.0;  // m beyond the line at red onset
  double power_limit_fraction = 0.95;  // of U^2 / (4 R)
  // Cap on the near-side slack. Below d_min it keeps a hard floor of
  // d_min - slack_near_max + h_min v on the planned gap.
  double slack_near_max = 0.5;  // m

  void validate() const {
    if (N < 1) throw std::invalid_argument("OcpConfig: N must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("OcpConfig: dt must be positive");
    for (double w : {w.w1, w.w2, w.w3, w.w4, w.w5, w.w6})
      if (!(w >= 0.0)) throw std::invalid_argument("OcpConfig: weights must be >= 0");
    if (!(h_min >= 0.0 && h_head >= 0.0 && d_min >= 0.0 && d_max > d_min))
      throw std::invalid_argument("OcpConfig: bad car-following parameters");
    if (!(power_limit_fraction > 0.0 && power_limit_fraction < 1.0))
      throw std::invalid_argument("OcpConfig: power_limit_fraction must be in (0, 1)");
    if (!(slack_near_max > 0.0)) throw std::invalid_argument("OcpConfig: slack_near_max must be positive");
  }
};

struct VehicleState {
  double d = 0.0;    // m
  double v = 0.0;    // m/s
  double soc = 0.0;  // -
};

/// Stage-interleaved decision vector: for k = 0..N-1
///   [d, v, soc, T_f, T_r, P_bat, F_b, s1, s2]
/// followed by the terminal state [d, v, soc].
struct OcpLayout {
  static constexpr Index kStride = 9;
  enum Offset : Index { D = 0, V = 1, SOC = 2, TF = 3, TR = 4, PB = 5, FB = 6, S1 = 7, S2 = 8 };

  std::size_t N = 0;

  [[nodiscard]] Index size() const { return kStride * static_cast<Index>(N) + 3; }
  [[nodiscard]] Index at(std::size_t k, Offset o) const {
    return kStride * static_cast<Index>(k) + static_cast<Index>(o);
  }
  [[nodiscard]] Index d(std::size_t k) const { return at(k, D); }
  [[nodiscard]] Index v(std::size_t k) const { return at(k, V); }
  [[nodiscard]] Index soc(std::size_t k) const { return at(k, SOC); }
  [[nodiscard]] Index Tf(std::size_t k) const { return at(k, TF); }
  [[nodiscard]] Index Tr(std::size_t k) const { return at(k, TR); }
  [[nodiscard]] Index P(std::size_t k) const { return at(k, PB); }
  [[nodiscard]] Index Fb(std::size_t k) const { return at(k, FB); }
  [[nodiscard]] Index s1(std::size_t k) const { return at(k, S1); }
  [[nodiscard]] Index s2(std::size_t k) const { return at(k, S2); }
};

enum class SignalMode { Free, Pass, Wait };

inline const char* to_string(SignalMode m) {
  switch (m) {
    case SignalMode::Free: return "free";
    case SignalMode::Pass: return "pass";
    case SignalMode::Wait: return "wait";
  }
  return "?";
}

/// Per-intersection choice for one horizon. `red_steps` lists the plan steps
/// (1..N) at which the light is red.
struct SignalDecision {
  int id = 0;
  double d_sig = 0.0;
  double red_onset = 0.0;
  SignalMode mode = SignalMode::Free;
  std::vector<std::size_t> red_steps;
};

/// Rows of one constraint family occupy [first, first + count).
struct ConstraintFamily {
  std::string name;
  bool equality = false;
  Index first = 0;
  Index count = 0;
};

/// Variables of one bound family: `offset` within each listed stage.
struct BoundFamily {
  std::string name;
  OcpLayout::Offset offset = OcpLayout::D;
  std::size_t stage_begin = 0;
  std::size_t stage_end = 0;  // exclusive; may equal N + 1 for states
  double lower = -kBoundInf;
  double upper = kBoundInf;
};

namespace detail {

inline constexpr double kPowerRowScale = 1e-3;
inline constexpr double kSpeedRowScale = 1e-2;
inline constexpr double kSlipRowScale = 1e-2;
inline constexpr double kEnvelopeRowScale = 1e-3;

}  // namespace detail

/// The transcribed finite-horizon problem for one MPC cycle.
class OcpProblem final : public NlpProblem {
 public:
  struct Inputs {
    VehicleState x0;
    double Tf_prev = 0.0;  // torques applied just before the horizon
    double Tr_prev = 0.0;
    PrecedingPrediction pred;
    std::vector<SignalDecision> signals;
    std::vector<double> phi;  // grade per stage, size N (empty: flat)
  };

  OcpProblem(EvModel model, OcpConfig cfg, Inputs in)
      : model_(std::move(model)), cfg_(cfg), in_(std::move(in)), lay_{cfg.N} {
    cfg_.validate();
    model_.validate();
    const std::size_t N = cfg_.N;
    if (in_.pred.v.size() < N + 1 || in_.pred.d.size() < N + 1)
      throw std::invalid_argument("build_ocp: prediction shorter than horizon");
    if (std::abs(in_.pred.dt - cfg_.dt) > 1e-12)
      throw std::invalid_argument("build_ocp: prediction dt differs from OCP dt");
    if (in_.phi.empty()) in_.phi.assign(N, 0.0);
    if (in_.phi.size() != N) throw std::invalid_argument("build_ocp: grade vector must have N entries");
    const auto& vp = model_.vehicle;
    const auto& x0 = in_.x0;
    if (!(x0.v >= -1e-9 && x0.v <= vp.v_max + 1e-6))
      throw std::invalid_argument("build_ocp: initial speed outside [0, v_max]");
    if (!(x0.soc >= model_.battery.soc_min && x0.soc <= model_.battery.soc_max))
      throw std::invalid_argument("build_ocp: initial SOC outside bounds");
    const double w0 = motor_speed(std::max(x0.v, 0.0), vp);
    if (w0 > vp.omega_max) throw std::invalid_argument("build_ocp: initial motor speed above limit");
    if (std::abs(in_.Tf_prev) > model_.powertrain.front.T_stall + 1e-9 ||
        std::abs(in_.Tr_prev) > model_.powertrain.rear.T_stall + 1e-9)
      throw std::invalid_argument("build_ocp: previous torque outside stall limits");

    road_.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
      const RoadLoad r = resistive_forces(0.0, in_.phi[k], vp);
      road_[k] = r.F_g + r.F_r;
    }
    build_registry();
  }

  [[nodiscard]] const OcpLayout& layout() const { return lay_; }
  [[nodiscard]] const OcpConfig& config() const { return cfg_; }
  [[nodiscard]] const EvModel& model() const { return model_; }
  [[nodiscard]] const Inputs& inputs() const { return in_; }
  [[nodiscard]] const std::vector<ConstraintFamily>& constraint_families() const { return families_; }
  [[nodiscard]] const std::vector<BoundFamily>& bound_families() const { return bound_families_; }
  [[nodiscard]] const ConstraintFamily& family(const std::string& name) const {
    for (const auto& f : families_)
      if (f.name == name) return f;
    throw std::out_of_range("no constraint family named " + name);
  }

  /// Acceleration at stage k and its partials in (v, T_f, T_r, F_b).
  struct Accel {
    double a = 0.0, dv = 0.0, dTf = 0.0, dTr = 0.0, dFb = 0.0, dvv = 0.0;
  };
  [[nodiscard]] Accel accel(const VectorXd& z, std::size_t k) const {
    const auto& p = model_.vehicle;
    const double v = z[lay_.v(k)];
    Accel r;
    r.a = (p.n * (z[lay_.Tf(k)] + z[lay_.Tr(k)]) - road_[k] - 0.5 * p.k_w * v * v - z[lay_.Fb(k)]) / p.m;
    r.dv = -p.k_w * v / p.m;
    r.dTf = r.dTr = p.n / p.m;
    r.dFb = -1.0 / p.m;
    r.dvv = -p.k_w / p.m;
    return r;
  }

  struct CostTerms {
    double J_p = 0.0;  // acceleration and battery power
    double J_t = 0.0;  // terminal gap and speed
    double J_f = 0.0;  // slack penalties
    [[nodiscard]] double total() const { return J_p + J_t + J_f; }
  };

  [[nodiscard]] CostTerms cost_terms(const VectorXd& z) const {
    CostTerms c;
    const auto& w = cfg_.w;
    for (std::size_t k = 0; k < cfg_.N; ++k) {
      const double a = accel(z, k).a;
      c.J_p += w.w1 * a * a + w.w2 * z[lay_.P(k)];
      c.J_f += w.w5 * sq(z[lay_.s1(k)]) + w.w6 * sq(z[lay_.s2(k)]);
    }
    if (cfg_.terminal_gap) c.J_t += w.w3 * sq(terminal_gap_error(z));
    if (cfg_.terminal_speed) c.J_t += w.w4 * sq(z[lay_.v(cfg_.N)] - pred_v(cfg_.N));
    return c;
  }

  [[nodiscard]] double terminal_gap_error(const VectorXd& z) const {
    const std::size_t N = cfg_.N;
    return pred_d(N) - z[lay_.d(N)] - cfg_.h_head * pred_v(N) - cfg_.d_min;
  }

  // ------------------------------------------------------------ NlpProblem
  [[nodiscard]] Index num_variables() const override { return lay_.size(); }
  [[nodiscard]] Index num_constraints() const override { return rows_; }

  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& gl, VectorXd& gu) const override {
    xl = VectorXd::Constant(lay_.size(), -kBoundInf);
    xu = VectorXd::Constant(lay_.size(), kBoundInf);
    for (const auto& b : bound_families_)
      for (std::size_t k = b.stage_begin; k < b.stage_end; ++k) {
        xl[lay_.at(k, b.offset)] = b.lower;
        xu[lay_.at(k, b.offset)] = b.upper;
      }
    gl = gl_;
    gu = gu_;
    if (slip_ != SideSlip::Row) {
      // Rows stay in place with a bound no torque pair can reach.
      const auto& pt = model_.powertrain;
      const double loose = -2.0 * detail::kSlipRowScale * pt.front.T_stall * pt.rear.T_stall;
      for (Index r = f_slip_; r < f_slip_ + static_cast<Index>(cfg_.N); ++r) gl[r] = loose;
    }
    if (slip_ == SideSlip::SignBounds) {
      for (std::size_t k = 0; k < cfg_.N; ++k) {
        for (Index i : {lay_.Tf(k), lay_.Tr(k)}) {
          if (torque_sign_[k] > 0) xl[i] = 0.0;
          else xu[i] = 0.0;
        }
      }
    }
  }

  /// How the same-sign torque requirement enters the NLP: as the product
  /// row, not at all, or as per-stage sign bounds on both torques.
  enum class SideSlip { Row, Inactive, SignBounds };

  [[nodiscard]] SideSlip side_slip_mode() const { return slip_; }

  [[nodiscard]] OcpProblem with_side_slip_inactive() const {
    OcpProblem p = *this;
    p.slip_ = SideSlip::Inactive;
    return p;
  }

  /// Restricts stage k to torque_sign[k] > 0 (both >= 0) or <= 0 (both <= 0).
  [[nodiscard]] OcpProblem with_torque_signs(std::vector<int> torque_sign) const {
    if (torque_sign.size() != cfg_.N) throw std::invalid_argument("with_torque_signs: need N signs");
    OcpProblem p = *this;
    p.slip_ = SideSlip::SignBounds;
    p.torque_sign_ = std::move(torque_sign);
    return p;
  }

  [[nodiscard]] double objective(const VectorXd& z) const override { return cost_terms(z).total(); }

  void gradient(const VectorXd& z, VectorXd& g) const override {
    g = VectorXd::Zero(lay_.size());
    const auto& w = cfg_.w;
    for (std::size_t k = 0; k < cfg_.N; ++k) {
      const Accel a = accel(z, k);
      const double c = 2.0 * w.w1 * a.a;
      g[lay_.v(k)] += c * a.dv;
      g[lay_.Tf(k)] += c * a.dTf;
      g[lay_.Tr(k)] += c * a.dTr;
      g[lay_.Fb(k)] += c * a.dFb;
      g[lay_.P(k)] += w.w2;
      g[lay_.s1(k)] += 2.0 * w.w5 * z[lay_.s1(k)];
      g[lay_.s2(k)] += 2.0 * w.w6 * z[lay_.s2(k)];
    }
    const std::size_t N = cfg_.N;
    if (cfg_.terminal_gap) g[lay_.d(N)] += -2.0 * w.w3 * terminal_gap_error(z);
    if (cfg_.terminal_speed) g[lay_.v(N)] += 2.0 * w.w4 * (z[lay_.v(N)] - pred_v(N));
  }

  void constraints(const VectorXd& z, VectorXd& g) const override {
    g.resize(rows_);
    const auto& p = model_.vehicle;
    const auto& b = model_.battery;
    const auto& pt = model_.powertrain;
    const double dt = cfg_.dt;
    const std::size_t N = cfg_.N;
    g[f_init_ + 0] = z[lay_.d(0)];
    g[f_init_ + 1] = z[lay_.v(0)];
    g[f_init_ + 2] = z[lay_.soc(0)];
    for (std::size_t k = 0; k < N; ++k) {
      const auto r = static_cast<Index>(k);
      const double v = z[lay_.v(k)], Tf = z[lay_.Tf(k)], Tr = z[lay_.Tr(k)];
      const double w = p.n * v;
      g[f_dyn_d_ + r] = z[lay_.d(k + 1)] - z[lay_.d(k)] - dt * v;
      g[f_dyn_v_ + r] = z[lay_.v(k + 1)] - v - dt * accel(z, k).a;
      g[f_dyn_soc_ + r] = z[lay_.soc(k + 1)] - z[lay_.soc(k)] + dt / b.C_bat * current(z[lay_.P(k)]);
      g[f_power_ + r] =
          detail::kPowerRowScale * (z[lay_.P(k)] - pt.poly_front(w, Tf) - pt.poly_rear(w, Tr));
      g[f_cf_far_ + r] = z[lay_.d(k + 1)] + z[lay_.s1(k)];
      g[f_cf_near_ + r] = -z[lay_.d(k + 1)] - cfg_.h_min * z[lay_.v(k + 1)] + z[lay_.s2(k)];
      g[f_speed_ + r] = detail::kSpeedRowScale * p.n * z[lay_.v(k + 1)];
      g[f_slip_ + r] = detail::kSlipRowScale * Tf * Tr;
      g[f_rate_f_ + r] = k == 0 ? Tf : Tf - z[lay_.Tf(k - 1)];
      g[f_rate_r_ + r] = k == 0 ? Tr : Tr - z[lay_.Tr(k - 1)];
      g[f_accel_ + r] = accel(z, k).a;
      g[f_env_f_ + r] = detail::kEnvelopeRowScale * w * Tf;
      g[f_env_r_ + r] = detail::kEnvelopeRowScale * w * Tr;
    }
    for (std::size_t i = 0; i < signal_rows_.size(); ++i)
      g[f_signal_ + static_cast<Index>(i)] = z[lay_.d(signal_rows_[i].step)];
  }

  [[nodiscard]] std::vector<Nonzero> jacobian_structure() const override {
    std::vector<Nonzero> s;
    s.reserve(static_cast<std::size_t>(jac_nnz_));
    jacobian_pass(nullptr, &s, {});
    return s;
  }

  void jacobian_values(const VectorXd& z, std::span<double> values) const override {
    jacobian_pass(&z, nullptr, values);
  }

  [[nodiscard]] bool has_hessian() const override { return true; }

  [[nodiscard]] std::vector<Nonzero> hessian_structure() const override {
    std::vector<Nonzero> s;
    hessian_pass(nullptr, 0.0, nullptr, &s, {});
    return s;
  }

  void hessian_values(const VectorXd& z, double obj_factor, const VectorXd& lambda,
                      std::span<double> values) const override {
    hessian_pass(&z, obj_factor, &lambda, nullptr, values);
  }

  [[nodiscard]] double pred_d(std::size_t k) const { return in_.pred.d[k]; }
  [[nodiscard]] double pred_v(std::size_t k) const { return in_.pred.v[k]; }
  [[nodiscard]] double power_upper_bound() const {
    return cfg_.power_limit_fraction * model_.battery.max_power();
  }

  /// Writes dimensions, bounds, the constraint registry and the Jacobian
  /// sparsity pattern as plain text.
  void dump(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(12);
    VectorXd xl, xu, gl, gu;
    bounds(xl, xu, gl, gu);
    out << "N " << cfg_.N << "\ndt " << cfg_.dt << "\nvariables " << num_variables()
        << "\nconstraints " << num_constraints() << "\n";
    out << "\n[families]\n";
    for (const auto& f : families_)
      out << f.name << ' ' << (f.equality ? "eq" : "ineq") << ' ' << f.first << ' ' << f.count << '\n';
    out << "\n[bound_families]\n";
    for (const auto& b : bound_families_)
      out << b.name << " offset=" << b.offset << " stages=[" << b.stage_begin << ',' << b.stage_end
          << ") lower=" << b.lower << " upper=" << b.upper << '\n';
    out << "\n[variable_bounds]\n";
    for (Index i = 0; i < xl.size(); ++i) out << i << ' ' << xl[i] << ' ' << xu[i] << '\n';
    out << "\n[constraint_bounds]\n";
    for (Index i = 0; i < gl.size(); ++i) out << i << ' ' << gl[i] << ' ' << gu[i] << '\n';
    out << "\n[jacobian_pattern]\n";
    for (const auto& nz : jacobian_structure()) out << nz.row << ' ' << nz.col << '\n';
  }

 private:
  static double sq(double x) { return x * x; }

  [[nodiscard]] double current(double P) const {
    const auto& b = model_.battery;
    return (b.U_oc - std::sqrt(b.U_oc * b.U_oc - 4.0 * P * b.R_b)) / (2.0 * b.R_b);
  }
  [[nodiscard]] double current_dP(double P) const {
    const auto& b = model_.battery;
    return 1.0 / std::sqrt(b.U_oc * b.U_oc - 4.0 * P * b.R_b);
  }
  [[nodiscard]] double current_dPP(double P) const {
    const auto& b = model_.battery;
    const double disc = b.U_oc * b.U_oc - 4.0 * P * b.R_b;
    return 2.0 * b.R_b / (disc * std::sqrt(disc));
  }

  struct SignalRow {
    std::size_t step = 0;
  };

  Index add_family(const std::string& name, bool eq, Index count) {
    families_.push_back({name, eq, rows_, count});
    const Index first = rows_;
    rows_ += count;
    return first;
  }

  void build_registry() {
    const std::size_t N = cfg_.N;
    const auto n = static_cast<Index>(N);
    const auto& p = model_.vehicle;
    const auto& pt = model_.powertrain;
    const double dT = p.dT_max * cfg_.dt;

    f_init_ = add_family("initial_state", true, 3);
    f_dyn_d_ = add_family("dynamics_position", true, n);
    f_dyn_v_ = add_family("dynamics_speed", true, n);
    f_dyn_soc_ = add_family("dynamics_soc", true, n);
    f_power_ = add_family("power_coupling", true, n);
    f_cf_far_ = add_family("car_following_far", false, n);
    f_cf_near_ = add_family("car_following_near", false, n);
    f_speed_ = add_family("motor_speed", false, n);
    f_slip_ = add_family("side_slip", false, n);
    f_rate_f_ = add_family("torque_rate_front", false, n);
    f_rate_r_ = add_family("torque_rate_rear", false, n);
    f_accel_ = add_family("acceleration", false, n);
    f_env_f_ = add_family("torque_envelope_front", false, n);
    f_env_r_ = add_family("torque_envelope_rear", false, n);

    std::vector<std::pair<double, double>> sig_bounds;
    for (const auto& s : in_.signals) {
      if (s.mode == SignalMode::Wait) {
        for (std::size_t k : s.red_steps) {
          if (k < 1 || k > N) continue;
          signal_rows_.push_back({k});
          sig_bounds.emplace_back(-kBoundInf, s.d_sig - cfg_.signal_stop_margin);
        }
      } else if (s.mode == SignalMode::Pass && !s.red_steps.empty()) {
        const std::size_t k = s.red_steps.front();
        if (k < 1 || k > N) continue;
        signal_rows_.push_back({k});
        sig_bounds.emplace_back(s.d_sig + cfg_.signal_pass_clearance, kBoundInf);
      }
    }
    f_signal_ = add_family("signal", false, static_cast<Index>(signal_rows_.size()));

    gl_ = VectorXd::Constant(rows_, -kBoundInf);
    gu_ = VectorXd::Constant(rows_, kBoundInf);
    gl_[f_init_] = gu_[f_init_] = in_.x0.d;
    gl_[f_init_ + 1] = gu_[f_init_ + 1] = in_.x0.v;
    gl_[f_init_ + 2] = gu_[f_init_ + 2] = in_.x0.soc;
    for (Index r = 0; r < n; ++r) {
      const auto k = static_cast<std::size_t>(r);
      for (Index f : {f_dyn_d_, f_dyn_v_, f_dyn_soc_, f_power_}) gl_[f + r] = gu_[f + r] = 0.0;
      gl_[f_cf_far_ + r] = pred_d(k + 1) - cfg_.d_max;
      gl_[f_cf_near_ + r] = cfg_.d_min - pred_d(k + 1);
      gu_[f_speed_ + r] = detail::kSpeedRowScale * p.omega_max;
      gl_[f_slip_ + r] = 0.0;
      const double ref_f = k == 0 ? in_.Tf_prev : 0.0, ref_r = k == 0 ? in_.Tr_prev : 0.0;
      gl_[f_rate_f_ + r] = ref_f - dT;
      gu_[f_rate_f_ + r] = ref_f + dT;
      gl_[f_rate_r_ + r] = ref_r - dT;
      gu_[f_rate_r_ + r] = ref_r + dT;
      gl_[f_accel_ + r] = p.a_min;
      gu_[f_accel_ + r] = p.a_max;
      gl_[f_env_f_ + r] = -detail::kEnvelopeRowScale * pt.front.P_rated;
      gu_[f_env_f_ + r] = detail::kEnvelopeRowScale * pt.front.P_rated;
      gl_[f_env_r_ + r] = -detail::kEnvelopeRowScale * pt.rear.P_rated;
      gu_[f_env_r_ + r] = detail::kEnvelopeRowScale * pt.rear.P_rated;
    }
    for (std::size_t i = 0; i < sig_bounds.size(); ++i) {
      gl_[f_signal_ + static_cast<Index>(i)] = sig_bounds[i].first;
      gu_[f_signal_ + static_cast<Index>(i)] = sig_bounds[i].second;
    }

    using O = OcpLayout::Offset;
    const auto& bat = model_.battery;
    bound_families_ = {
        {"speed", O::V, 1, N + 1, 0.0, p.v_max},
        {"soc", O::SOC, 1, N + 1, bat.soc_min, bat.soc_max},
        {"front_stall_torque", O::TF, 0, N, -pt.front.T_stall, pt.front.T_stall},
        {"rear_stall_torque", O::TR, 0, N, -pt.rear.T_stall, pt.rear.T_stall},
        {"battery_power", O::PB, 0, N, -kBoundInf, power_upper_bound()},
        {"friction_brake", O::FB, 0, N, 0.0, p.F_b_max},
        {"slack_far", O::S1, 0, N, 0.0, kBoundInf},
        {"slack_near", O::S2, 0, N, 0.0, cfg_.slack_near_max},
    };
    jac_nnz_ = static_cast<Index>(jacobian_structure().size());
  }

  // One routine emits either the pattern or the values, in the same order.
  void jacobian_pass(const VectorXd* z, std::vector<Nonzero>* s, std::span<double> vals) const {
    std::size_t idx = 0;
    const auto put = [&](Index row, Index col, double val) {
      if (s) s->push_back({row, col});
      else vals[idx++] = val;
    };
    const auto& p = model_.vehicle;
    const auto& pt = model_.powertrain;
    const double dt = cfg_.dt;
    const double C = model_.battery.C_bat;
    const auto x = [&](Index i) { return z ? (*z)[i] : 0.0; };

    put(f_init_, lay_.d(0), 1.0);
    put(f_init_ + 1, lay_.v(0), 1.0);
    put(f_init_ + 2, lay_.soc(0), 1.0);
    for (std::size_t k = 0; k < cfg_.N; ++k) {
      const auto r = static_cast<Index>(k);
      const double v = x(lay_.v(k)), Tf = x(lay_.Tf(k)), Tr = x(lay_.Tr(k));
      const double w = p.n * v;
      Accel a;
      PolyEval ef, er;
      if (z) {
        a = accel(*z, k);
        ef = pt.poly_front.eval(w, Tf);
        er = pt.poly_rear.eval(w, Tr);
      }
      put(f_dyn_d_ + r, lay_.d(k), -1.0);
      put(f_dyn_d_ + r, lay_.v(k), -dt);
      put(f_dyn_d_ + r, lay_.d(k + 1), 1.0);

      put(f_dyn_v_ + r, lay_.v(k), -1.0 - dt * a.dv);
      put(f_dyn_v_ + r, lay_.Tf(k), -dt * a.dTf);
      put(f_dyn_v_ + r, lay_.Tr(k), -dt * a.dTr);
      put(f_dyn_v_ + r, lay_.Fb(k), -dt * a.dFb);
      put(f_dyn_v_ + r, lay_.v(k + 1), 1.0);

      put(f_dyn_soc_ + r, lay_.soc(k), -1.0);
      put(f_dyn_soc_ + r, lay_.P(k), z ? dt / C * current_dP(x(lay_.P(k))) : 0.0);
      put(f_dyn_soc_ + r, lay_.soc(k + 1), 1.0);

      const double sp = detail::kPowerRowScale;
      put(f_power_ + r, lay_.v(k), -sp * p.n * (ef.dw + er.dw));
      put(f_power_ + r, lay_.Tf(k), -sp * ef.dT);
      put(f_power_ + r, lay_.Tr(k), -sp * er.dT);
      put(f_power_ + r, lay_.P(k), sp);

      put(f_cf_far_ + r, lay_.s1(k), 1.0);
      put(f_cf_far_ + r, lay_.d(k + 1), 1.0);

      put(f_cf_near_ + r, lay_.s2(k), 1.0);
      put(f_cf_near_ + r, lay_.d(k + 1), -1.0);
      put(f_cf_near_ + r, lay_.v(k + 1), -cfg_.h_min);

      put(f_speed_ + r, lay_.v(k + 1), detail::kSpeedRowScale * p.n);

      put(f_slip_ + r, lay_.Tf(k), detail::kSlipRowScale * Tr);
      put(f_slip_ + r, lay_.Tr(k), detail::kSlipRowScale * Tf);

      if (k > 0) put(f_rate_f_ + r, lay_.Tf(k - 1), -1.0);
      put(f_rate_f_ + r, lay_.Tf(k), 1.0);
      if (k > 0) put(f_rate_r_ + r, lay_.Tr(k - 1), -1.0);
      put(f_rate_r_ + r, lay_.Tr(k), 1.0);

      put(f_accel_ + r, lay_.v(k), a.dv);
      put(f_accel_ + r, lay_.Tf(k), a.dTf);
      put(f_accel_ + r, lay_.Tr(k), a.dTr);
      put(f_accel_ + r, lay_.Fb(k), a.dFb);

      const double se = detail::kEnvelopeRowScale;
      put(f_env_f_ + r, lay_.v(k), se * p.n * Tf);
      put(f_env_f_ + r, lay_.Tf(k), se * w);
      put(f_env_r_ + r, lay_.v(k), se * p.n * Tr);
      put(f_env_r_ + r, lay_.Tr(k), se * w);
    }
    for (std::size_t i = 0; i < signal_rows_.size(); ++i)
      put(f_signal_ + static_cast<Index>(i), lay_.d(signal_rows_[i].step), 1.0);
  }

  // Lower triangle of the Lagrangian Hessian; stage blocks over
  // (v, T_f, T_r, P, F_b, s1, s2) plus the terminal state.
  void hessian_pass(const VectorXd* z, double sigma, const VectorXd* lam, std::vector<Nonzero>* s,
                    std::span<double> vals) const {
    std::size_t idx = 0;
    const auto put = [&](Index row, Index col, double val) {
      if (s) s->push_back({std::max(row, col), std::min(row, col)});
      else vals[idx++] = val;
    };
    const auto& p = model_.vehicle;
    const auto& pt = model_.powertrain;
    const auto& w = cfg_.w;
    const double dt = cfg_.dt;
    const double C = model_.battery.C_bat;
    const auto y = [&](Index row) { return lam ? (*lam)[row] : 0.0; };

    for (std::size_t k = 0; k < cfg_.N; ++k) {
      const auto r = static_cast<Index>(k);
      double h_vv = 0, h_fv = 0, h_rv = 0, h_bv = 0, h_ff = 0, h_rf = 0, h_rr = 0, h_bf = 0, h_br = 0,
             h_bb = 0, h_pp = 0;
      if (z) {
        const Accel a = accel(*z, k);
        const double v = (*z)[lay_.v(k)], Tf = (*z)[lay_.Tf(k)], Tr = (*z)[lay_.Tr(k)];
        const double om = p.n * v;
        const PolyEval ef = pt.poly_front.eval(om, Tf);
        const PolyEval er = pt.poly_rear.eval(om, Tr);
        // Objective: w1 a^2.
        const double c = 2.0 * sigma * w.w1;
        h_vv += c * (a.dv * a.dv + a.a * a.dvv);
        h_fv += c * a.dTf * a.dv;
        h_rv += c * a.dTr * a.dv;
        h_bv += c * a.dFb * a.dv;
        h_ff += c * a.dTf * a.dTf;
        h_rf += c * a.dTr * a.dTf;
        h_rr += c * a.dTr * a.dTr;
        h_bf += c * a.dFb * a.dTf;
        h_br += c * a.dFb * a.dTr;
        h_bb += c * a.dFb * a.dFb;
        // Constraint curvature.
        h_vv += -dt * y(f_dyn_v_ + r) * a.dvv + y(f_accel_ + r) * a.dvv;
        const double yp = -detail::kPowerRowScale * y(f_power_ + r);
        h_vv += yp * p.n * p.n * (ef.dww + er.dww);
        h_fv += yp * p.n * ef.dwT;
        h_rv += yp * p.n * er.dwT;
        h_ff += yp * ef.dTT;
        h_rr += yp * er.dTT;
        h_rf += detail::kSlipRowScale * y(f_slip_ + r);
        h_fv += detail::kEnvelopeRowScale * p.n * y(f_env_f_ + r);
        h_rv += detail::kEnvelopeRowScale * p.n * y(f_env_r_ + r);
        h_pp += y(f_dyn_soc_ + r) * dt / C * current_dPP((*z)[lay_.P(k)]);
      }
      put(lay_.v(k), lay_.v(k), h_vv);
      put(lay_.Tf(k), lay_.v(k), h_fv);
      put(lay_.Tr(k), lay_.v(k), h_rv);
      put(lay_.Fb(k), lay_.v(k), h_bv);
      put(lay_.Tf(k), lay_.Tf(k), h_ff);
      put(lay_.Tr(k), lay_.Tf(k), h_rf);
      put(lay_.Fb(k), lay_.Tf(k), h_bf);
      put(lay_.Tr(k), lay_.Tr(k), h_rr);
      put(lay_.Fb(k), lay_.Tr(k), h_br);
      put(lay_.P(k), lay_.P(k), h_pp);
      put(lay_.Fb(k), lay_.Fb(k), h_bb);
      put(lay_.s1(k), lay_.s1(k), 2.0 * sigma * w.w5);
      put(lay_.s2(k), lay_.s2(k), 2.0 * sigma * w.w6);
    }
    const std::size_t N = cfg_.N;
    put(lay_.d(N), lay_.d(N), cfg_.terminal_gap ? 2.0 * sigma * w.w3 : 0.0);
    put(lay_.v(N), lay_.v(N), cfg_.terminal_speed ? 2.0 * sigma * w.w4 : 0.0);
  }

  EvModel model_;
  OcpConfig cfg_;
  Inputs in_;
  OcpLayout lay_;
  std::vector<double> road_;  // grade plus rolling force per stage

  std::vector<ConstraintFamily> families_;
  std::vector<BoundFamily> bound_families_;
  std::vector<SignalRow> signal_rows_;
  Index rows_ = 0;
  Index f_init_ = 0, f_dyn_d_ = 0, f_dyn_v_ = 0, f_dyn_soc_ = 0, f_power_ = 0, f_cf_far_ = 0,
        f_cf_near_ = 0, f_speed_ = 0, f_slip_ = 0, f_rate_f_ = 0, f_rate_r_ = 0, f_accel_ = 0,
        f_env_f_ = 0, f_env_r_ = 0, f_signal_ = 0;
  VectorXd gl_, gu_;
  Index jac_nnz_ = 0;
  SideSlip slip_ = SideSlip::Row;
  std::vector<int> torque_sign_;
};

[[nodiscard]] inline OcpProblem build_ocp(const VehicleState& x0, const PrecedingPrediction& pred,
                                          const std::vector<SignalDecision>& signals,
                                          const std::vector<double>& phi, const EvModel& model,
                                          const OcpConfig& cfg, double Tf_prev = 0.0,
                                          double Tr_prev = 0.0) {
  return OcpProblem(model, cfg, {x0, Tf_prev, Tr_prev, pred, signals, phi});
}

/// Cost split, residuals and derivatives at one point.
struct OcpEvaluation {
  OcpProblem::CostTerms cost;
  double J = 0.0;
  VectorXd eq_residual;     // g - bound for every equality row, in registry order
  VectorXd ineq_violation;  // max(0, g_l - g, g - g_u) for every inequality row
  VectorXd g;
  VectorXd gradient;
  Eigen::SparseMatrix<double> jacobian;
};

[[nodiscard]] inline OcpEvaluation evaluate(const OcpProblem& ocp, const VectorXd& z) {
  if (z.size() != ocp.num_variables())
    throw std::invalid_argument("evaluate: decision vector has wrong dimension");
  OcpEvaluation e;
  e.cost = ocp.cost_terms(z);
  e.J = e.cost.total();
  ocp.constraints(z, e.g);
  ocp.gradient(z, e.gradient);
  e.jacobian = evaluate_jacobian(ocp, z);
  VectorXd xl, xu, gl, gu;
  ocp.bounds(xl, xu, gl, gu);
  std::vector<double> eq, ineq;
  for (Index r = 0; r < e.g.size(); ++r) {
    if (gl[r] == gu[r]) {
      eq.push_back(e.g[r] - gl[r]);
    } else {
      double viol = 0.0;
      if (detail::finite_bound(gl[r])) viol = std::max(viol, gl[r] - e.g[r]);
      if (detail::finite_bound(gu[r])) viol = std::max(viol, e.g[r] - gu[r]);
      ineq.push_back(viol);
    }
  }
  e.eq_residual = Eigen::Map<VectorXd>(eq.data(), static_cast<Index>(eq.size()));
  e.ineq_violation = Eigen::Map<VectorXd>(ineq.data(), static_cast<Index>(ineq.size()));
  return e;
}

// -------------------------------------------------------------- warm start

namespace detail {

inline double clamp_torque_pair(double T_total, const EvModel& m, double v, double& Tf, double& Tr) {
  const double w = std::clamp(motor_speed(std::max(v, 0.0), m.vehicle), 0.0, m.vehicle.omega_max);
  const double ef = max_torque_envelope(m.powertrain.front, w);
  const double er = max_torque_envelope(m.powertrain.rear, w);
  const double T = std::clamp(T_total, -(ef + er), ef + er);
  Tf = 0.5 * T;
  Tr = 0.5 * T;
  if (std::abs(Tf) > ef) {
    Tf = std::copysign(ef, T);
    Tr = T - Tf;
  } else if (std::abs(Tr) > er) {
    Tr = std::copysign(er, T);
    Tf = T - Tr;
  }
  return T;
}

inline double plan_power(const EvModel& m, double v, double Tf, double Tr) {
  const double w = motor_speed(v, m.vehicle);
  return m.powertrain.poly_front(w, Tf) + m.powertrain.poly_rear(w, Tr);
}

}  // namespace detail

/// Fills the states of stages from..N by integrating the stored controls from
/// the state at `from` (speed kept non-negative; torques and brake are
/// reassigned to hold zero speed when the vehicle would roll backwards).
inline void rollout_states(const OcpLayout& lay, const EvModel& m, const std::vector<double>& phi,
                           double dt, std::size_t from, VectorXd& z) {
  const auto& vp = m.vehicle;
  for (std::size_t k = from; k < lay.N; ++k) {
    const double v = z[lay.v(k)];
    const double phik = phi.empty() ? 0.0 : phi[k];
    double a = acceleration_from_torque(z[lay.Tf(k)] + z[lay.Tr(k)], z[lay.Fb(k)], v, phik, vp);
    if (v + dt * a < 0.0) {
      // Hold the vehicle with the friction brake instead of reversing.
      z[lay.Fb(k)] = std::clamp(z[lay.Fb(k)] + vp.m * (a + v / dt), 0.0, vp.F_b_max);
      a = acceleration_from_torque(z[lay.Tf(k)] + z[lay.Tr(k)], z[lay.Fb(k)], v, phik, vp);
    }
    z[lay.P(k)] = std::min(detail::plan_power(m, v, z[lay.Tf(k)], z[lay.Tr(k)]),
                           0.9 * m.battery.max_power());
    z[lay.d(k + 1)] = z[lay.d(k)] + dt * v;
    z[lay.v(k + 1)] = std::max(0.0, v + dt * a);
    z[lay.soc(k + 1)] = soc_step(z[lay.soc(k)], battery_current(z[lay.P(k)], m.battery), dt, m.battery);
  }
}

/// Slacks that make the car-following rows hold at the stored states.
inline void fit_slacks(const OcpLayout& lay, const OcpConfig& cfg, const PrecedingPrediction& pred,
                       VectorXd& z) {
  for (std::size_t k = 0; k < lay.N; ++k) {
    const double gap = pred.d[k + 1] - z[lay.d(k + 1)];
    z[lay.s1(k)] = std::max(0.0, gap - cfg.d_max) + 0.1;
    z[lay.s2(k)] = std::min(cfg.slack_near_max, std::max(0.0, cfg.d_min + cfg.h_min * z[lay.v(k + 1)] - gap) + 0.1);
  }
}

/// Initial guess. With a previous solution the plan is shifted by `shift`
/// stages and the last stage's controls are repeated; otherwise the vehicle
/// coasts at constant speed with an even torque split.
[[nodiscard]] inline VectorXd warm_start(const VectorXd* prev, std::size_t shift, const VehicleState& x0,
                                         const PrecedingPrediction& pred, const std::vector<double>& phi,
                                         const EvModel& m, const OcpConfig& cfg) {
  const OcpLayout lay{cfg.N};
  VectorXd z = VectorXd::Zero(lay.size());
  const std::size_t N = cfg.N;
  if (prev && prev->size() == lay.size() && shift < N) {
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t src = std::min(k + shift, N - 1);
      for (Index o = 3; o < OcpLayout::kStride; ++o) z[lay.at(k, OcpLayout::Offset(o))] = (*prev)[lay.at(src, OcpLayout::Offset(o))];
    }
    for (std::size_t k = 0; k + shift <= N; ++k) {
      z[lay.d(k)] = (*prev)[lay.d(k + shift)];
      z[lay.v(k)] = (*prev)[lay.v(k + shift)];
      z[lay.soc(k)] = (*prev)[lay.soc(k + shift)];
    }
    // Re-anchor on the measured state, then integrate the repeated tail.
    const double dd = x0.d - z[lay.d(0)], ds = x0.soc - z[lay.soc(0)];
    for (std::size_t k = 0; k + shift <= N; ++k) {
      z[lay.d(k)] += dd;
      z[lay.soc(k)] += ds;
    }
    z[lay.v(0)] = x0.v;
    rollout_states(lay, m, phi, cfg.dt, N - shift, z);
  } else {
    z[lay.d(0)] = x0.d;
    z[lay.v(0)] = x0.v;
    z[lay.soc(0)] = x0.soc;
    for (std::size_t k = 0; k < N; ++k) {
      const double phik = phi.empty() ? 0.0 : phi[k];
      double Tf = 0.0, Tr = 0.0;
      detail::clamp_torque_pair(torque_from_acceleration(0.0, x0.v, phik, 0.0, m.vehicle), m, x0.v, Tf, Tr);
      z[lay.Tf(k)] = Tf;
      z[lay.Tr(k)] = Tr;
      z[lay.Fb(k)] = 0.0;
    }
    rollout_states(lay, m, phi, cfg.dt, 0, z);
  }
  fit_slacks(lay, cfg, pred, z);
  return z;
}

// ------------------------------------------------------------ signal modes

/// Pass commitments carried between MPC cycles, keyed by (signal, red onset).
struct SignalMemory {
  std::map<std::pair<int, long long>, SignalMode> committed;
};

namespace detail {

/// Distance covered in `steps` steps from speed v0 when accelerating at up
/// to a_lim with jerk j, capped at v_cap.
inline double reach_distance(double v0, double a0, double a_lim, double j, double v_cap, double dt,
                             std::size_t steps) {
  double d = 0.0, v = v0, a = a0;
  for (std::size_t k = 0; k < steps; ++k) {
    a = std::min(a + j * dt, a_lim);
    if (v >= v_cap) a = 0.0;
    d += v * dt;
    v = std::min(v_cap, std::max(0.0, v + a * dt));
  }
  return d;
}

/// Stopping distance with braking ramped at jerk j down to a_brake < 0.
inline double stopping_distance(double v0, double a0, double a_brake, double j, double dt) {
  double d = 0.0, v = v0, a = std::min(a0, 0.0);
  for (int k = 0; k < 100000 && v > 0.0; ++k) {
    a = std::max(a - j * dt, a_brake);
    d += v * dt;
    v += a * dt;
  }
  return d;
}

}  // namespace detail

/// Chooses pass/wait per intersection ahead (within reach of the horizon)
/// whose red phase falls inside it. Pass requires that a jerk-limited launch
/// at 0.8 a_max reaches the line plus clearance before red onset and that
/// the predicted preceding vehicle is itself clear of the line by then; a
/// pass once chosen for a given red phase is kept while still reachable.
[[nodiscard]] inline std::vector<SignalDecision> plan_signal_modes(
    const VehicleState& x0, double a0, double t0, const std::vector<SignalSchedule>& signals,
    const PrecedingPrediction& pred, const EvModel& m, const OcpConfig& cfg, SignalMemory* memory) {
  std::vector<SignalDecision> out;
  const auto& vp = m.vehicle;
  const std::size_t N = cfg.N;
  const double horizon = static_cast<double>(N) * cfg.dt;
  const double reach = x0.v * horizon + 0.5 * vp.a_max * horizon * horizon;
  const double jerk = std::min(vp.j_max, vp.n * 2.0 * vp.dT_max / vp.m);
  for (const auto& sig : signals) {
    if (sig.d_sig() <= x0.d) continue;
    if (sig.d_sig() - x0.d > std::min(reach, vp.v_max * horizon) + 50.0) continue;
    SignalDecision dec;
    dec.id = sig.id();
    dec.d_sig = sig.d_sig();
    for (std::size_t k = 1; k <= N; ++k)
      if (!sig.is_green(t0 + static_cast<double>(k) * cfg.dt)) dec.red_steps.push_back(k);
    if (dec.red_steps.empty()) {
      out.push_back(dec);
      continue;
    }
    const std::size_t k_red = dec.red_steps.front();
    dec.red_onset = t0 + static_cast<double>(k_red) * cfg.dt;
    if (!sig.is_green(t0)) {
      dec.mode = SignalMode::Wait;
      out.push_back(dec);
      continue;
    }
    const double target = sig.d_sig() + cfg.signal_pass_clearance - x0.d;
    const auto can_pass = [&](double a_frac) {
      return detail::reach_distance(x0.v, a0, a_frac * vp.a_max, jerk, vp.v_max, cfg.dt, k_red) >= target;
    };
    const bool leader_clear = pred.d[k_red] >= sig.d_sig() + cfg.signal_pass_clearance + cfg.d_min +
                                                   cfg.h_min * x0.v;
    const bool can_stop = x0.d + detail::stopping_distance(x0.v, a0, 0.9 * vp.a_min, jerk, cfg.dt) <=
                          sig.d_sig() - cfg.signal_stop_margin;
    const auto key = std::make_pair(sig.id(), std::llround(dec.red_onset * 10.0));
    const bool was_pass = memory && memory->committed.count(key) &&
                          memory->committed.at(key) == SignalMode::Pass;
    if (was_pass) {
      dec.mode = (can_pass(1.0) || !can_stop) ? SignalMode::Pass : SignalMode::Wait;
    } else {
      dec.mode = (can_pass(0.8) && leader_clear) || (!can_stop && can_pass(1.0)) ? SignalMode::Pass
                                                                                  : SignalMode::Wait;
    }
    if (memory) {
      if (dec.mode == SignalMode::Pass) memory->committed[key] = SignalMode::Pass;
      else memory->committed.erase(key);
    }
    out.push_back(dec);
  }
  return out;
}

/// Grade per stage, sampled at the planned positions of z.
[[nodiscard]] inline std::vector<double> grade_along(const VectorXd& z, const OcpLayout& lay,
                                                     const GradeProfile& grade) {
  std::vector<double> phi(lay.N);
  for (std::size_t k = 0; k < lay.N; ++k) phi[k] = grade.at(z[lay.d(k)]);
  return phi;
}

// ------------------------------------------------------------------ solve

/// Largest scaled violation of T_f T_r >= 0 over the plan.
[[nodiscard]] inline double side_slip_violation(const OcpProblem& ocp, const VectorXd& z) {
  const auto& lay = ocp.layout();
  double worst = 0.0;
  for (std::size_t k = 0; k < lay.N; ++k)
    worst = std::max(worst, -detail::kSlipRowScale * z[lay.Tf(k)] * z[lay.Tr(k)]);
  return worst;
}

struct OcpSolve {
  Solution solution;
  int phases = 1;
  int iterations = 0;  // over both phases
};

/// Solves first with the side-slip rows inactive; a plan that already keeps
/// both torques on the same side of zero is then optimal for the full
/// problem too. Otherwise each stage's torque sign is fixed from the
/// first-phase total torque and the problem is solved again with sign
/// bounds, which avoids the degenerate product row at zero torque.
[[nodiscard]] inline OcpSolve solve_ocp(const OcpProblem& ocp, const VectorXd& z0,
                                        const SolverOptions& opts = {}, const Multipliers* warm = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  OcpSolve out;
  out.solution = solve(ocp.with_side_slip_inactive(), z0, opts, warm);
  out.iterations = out.solution.iterations;
  if (side_slip_violation(ocp, out.solution.x) <= opts.constraint_tol) return out;

  const auto& lay = ocp.layout();
  VectorXd z = out.solution.x;
  std::vector<int> sign(lay.N);
  for (std::size_t k = 0; k < lay.N; ++k) {
    double& Tf = z[lay.Tf(k)];
    double& Tr = z[lay.Tr(k)];
    sign[k] = Tf + Tr >= 0.0 ? 1 : -1;
    if (Tf * Tr < 0.0) {
      // Move the minority torque onto the other motor.
      if ((Tf > 0.0) == (sign[k] > 0)) {
        Tf += Tr;
        Tr = 0.0;
      } else {
        Tr += Tf;
        Tf = 0.0;
      }
    }
  }
  SolverOptions o2 = opts;
  const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (std::isfinite(opts.time_budget)) o2.time_budget = std::max(0.0, opts.time_budget - used);
  Solution second = solve(ocp.with_torque_signs(std::move(sign)), z, o2);
  out.phases = 2;
  out.iterations += second.iterations;
  second.wall_time += out.solution.wall_time;
  out.solution = std::move(second);
  return out;
}

}  // namespace ecodrive
