#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecodrive/battery.hpp"
#include "ecodrive/interior_point.hpp"
#include "ecodrive/ocp.hpp"
#include "ecodrive/traffic.hpp"
#include "ecodrive/vehicle_model.hpp"

namespace ecodrive {

struct MpcConfig {
  double horizon = 15.0;  // s
  double update = 1.0;    // s
  double dt = 0.1;        // s
  OcpConfig ocp;          // N and dt are overwritten from the fields above
  NoiseConfig noise;
  SolverOptions solver;
  std::uint64_t seed = 0;
  double initial_gap = 40.0;  // m behind the preceding vehicle at t = 0
  double soc0 = 0.8;
  bool warm_start = true;
  // Per-step check of the applied control against the measured preceding
  // vehicle; adds friction brake when the plan would leave no safe stop.
  bool safety_filter = true;
  double lead_decel = 3.0;  // m/s^2, braking assumed for the preceding vehicle
  // Battery parameters per cycle (temperature feedback would go here).
  std::function<BatteryParams(double t, const BatteryParams& nominal)> bms;
  // Called after every solve, for diagnostics and dumps.
  std::function<void(const OcpProblem&, const VectorXd& z0, const OcpSolve&)> on_solve;

  [[nodiscard]] std::size_t N() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }
  [[nodiscard]] std::size_t steps_per_update() const {
    return static_cast<std::size_t>(std::llround(update / dt));
  }
  [[nodiscard]] OcpConfig ocp_config() const {
    OcpConfig c = ocp;
    c.N = N();
    c.dt = dt;
    return c;
  }

  void validate() const {
    if (!(dt > 0.0 && update > 0.0 && horizon > 0.0))
      throw std::invalid_argument("MpcConfig: horizon, update and dt must be positive");
    const auto integral = [](double x) { return std::abs(x - std::round(x)) < 1e-9; };
    if (!integral(horizon / dt) || !integral(update / dt))
      throw std::invalid_argument("MpcConfig: horizon and update must be multiples of dt");
    if (update > horizon + 1e-12) throw std::invalid_argument("MpcConfig: update longer than horizon");
    if (!(soc0 > 0.0 && soc0 <= 1.0)) throw std::invalid_argument("MpcConfig: soc0 must be in (0, 1]");
    if (!(lead_decel > 0.0)) throw std::invalid_argument("MpcConfig: lead_decel must be positive");
    noise.validate();
    solver.validate();
    ocp_config().validate();
  }
};

/// Control held over one plant step.
struct Control {
  double Tf = 0.0;  // N*m
  double Tr = 0.0;  // N*m
  double Fb = 0.0;  // N
};

struct PlantResult {
  VehicleState next;
  double a = 0.0;      // m/s^2 over the step
  double P_bat = 0.0;  // W
  double I_bat = 0.0;  // A
};

/// Truth plant: forward Euler on (d, v, SOC), speed clamped at zero.
/// Throws PowerExceedsBatteryLimit when the pack cannot supply the power.
[[nodiscard]] inline PlantResult plant_step(const VehicleState& x, const Control& u, double phi,
                                            const EvModel& m, double dt) {
  PlantResult r;
  r.a = acceleration_from_torque(u.Tf + u.Tr, u.Fb, x.v, phi, m.vehicle);
  const double w = motor_speed(x.v, m.vehicle);
  r.P_bat = m.powertrain.poly_front(w, u.Tf) + m.powertrain.poly_rear(w, u.Tr);
  r.I_bat = battery_current(r.P_bat, m.battery);
  r.next.d = x.d + dt * x.v;
  r.next.v = std::max(0.0, x.v + dt * r.a);
  r.next.soc = soc_step(x.soc, r.I_bat, dt, m.battery);
  return r;
}

enum class StepSource { Optimal, BestFeasible, ShiftedPlan, SafeStop, Baseline };

inline const char* to_string(StepSource s) {
  switch (s) {
    case StepSource::Optimal: return "optimal";
    case StepSource::BestFeasible: return "best_feasible";
    case StepSource::ShiftedPlan: return "shifted_plan";
    case StepSource::SafeStop: return "safe_stop";
    case StepSource::Baseline: return "baseline";
  }
  return "?";
}

/// One plant step: state at t and the control held over [t, t + dt).
struct RunStep {
  double t = 0.0;
  double d = 0.0, v = 0.0, soc = 0.0;
  double a = 0.0;
  double Tf = 0.0, Tr = 0.0, P_bat = 0.0, Fb = 0.0, I_bat = 0.0;
  double s1 = 0.0, s2 = 0.0;
  double d_p = 0.0, v_p = 0.0;  // actual preceding vehicle
  double phi = 0.0;
  int signal_id = -1;  // nearest intersection ahead in the plan, -1 if none
  SignalMode signal_mode = SignalMode::Free;
  StepSource source = StepSource::Optimal;
  bool filtered = false;  // safety filter added brake this step
  std::size_t cycle = 0;
};

struct CycleRecord {
  double t = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  StepSource source = StepSource::Optimal;
  int iterations = 0;
  int phases = 1;
  double solve_time = 0.0;  // s of wall time
  double objective = 0.0;
  int shift = 0;  // prediction phase shift drawn for this cycle, steps
};

struct RunLog {
  std::vector<RunStep> steps;
  std::vector<CycleRecord> cycles;
  VehicleState final_state;
  double dt = 0.1;
  double soc0 = 0.8;
  std::string label;
  std::string config_snapshot;
};

class CollisionError : public std::runtime_error {
 public:
  CollisionError(const std::string& what, double t, double gap)
      : std::runtime_error(what), t_(t), gap_(gap) {}
  [[nodiscard]] double t() const { return t_; }
  [[nodiscard]] double gap() const { return gap_; }

 private:
  double t_;
  double gap_;
};

namespace detail {

/// Keeps both torques on one side of zero with the same total.
inline void enforce_same_sign(Control& u) {
  if (u.Tf * u.Tr >= 0.0) return;
  const double T = u.Tf + u.Tr;
  if ((u.Tf > 0.0) == (T >= 0.0)) {
    u.Tf = T;
    u.Tr = 0.0;
  } else {
    u.Tr = T;
    u.Tf = 0.0;
  }
}

/// Clamps each torque to its envelope at speed v and to +-dT of the
/// previous torque.
inline void enforce_actuator_limits(Control& u, const Control& prev, double v, const EvModel& m,
                                    double dt) {
  const double w = std::clamp(motor_speed(v, m.vehicle), 0.0, m.vehicle.omega_max);
  const double dT = m.vehicle.dT_max * dt;
  const double ef = max_torque_envelope(m.powertrain.front, w);
  const double er = max_torque_envelope(m.powertrain.rear, w);
  u.Tf = std::clamp(std::clamp(u.Tf, prev.Tf - dT, prev.Tf + dT), -ef, ef);
  u.Tr = std::clamp(std::clamp(u.Tr, prev.Tr - dT, prev.Tr + dT), -er, er);
  u.Fb = std::clamp(u.Fb, 0.0, m.vehicle.F_b_max);
}

/// Last resort: ramp the motors to zero and brake in proportion to the
/// shortfall against the safe gap.
inline Control safe_stop_control(const VehicleState& x, const Control& prev, double gap, double v_p,
                                 const EvModel& m, const OcpConfig& cfg, double dt) {
  Control u;
  const double dT = m.vehicle.dT_max * dt;
  u.Tf = std::clamp(0.0, prev.Tf - dT, prev.Tf + dT);
  u.Tr = std::clamp(0.0, prev.Tr - dT, prev.Tr + dT);
  const double want = cfg.d_min + cfg.h_min * x.v + x.v;  // one extra second of travel
  const double shortfall = want - gap + std::max(0.0, x.v - v_p) * 2.0;
  u.Fb = std::clamp(2000.0 * shortfall, 0.0, m.vehicle.F_b_max);
  // Stay within the acceleration floor.
  const double a = acceleration_from_torque(u.Tf + u.Tr, u.Fb, x.v, 0.0, m.vehicle);
  if (a < m.vehicle.a_min) u.Fb = std::max(0.0, u.Fb - m.vehicle.m * (m.vehicle.a_min - a));
  return u;
}

/// True when, after one step at acceleration a, the ego keeps the planned
/// gap floor and can still stop behind the preceding vehicle braking at
/// lead_decel from its measured state.
inline bool step_is_safe(const VehicleState& x, double a, double d_p, double v_p, const EvModel& m,
                         const OcpConfig& cfg, double lead_decel, double dt) {
  const double d1 = x.d + dt * x.v;
  const double v1 = std::max(0.0, x.v + dt * a);
  const double floor = cfg.d_min - cfg.slack_near_max;
  const double brake = -m.vehicle.a_min;
  // Euler stopping distances: v^2 / 2b plus up to one step of travel.
  const double ego_stop = v1 * v1 / (2.0 * brake) + v1 * dt;
  const double lead_stop = v_p * v_p / (2.0 * lead_decel);
  const double gap1 = d_p + dt * v_p - d1;
  const bool headway = gap1 >= floor + cfg.h_min * v1;
  // Headway still holdable if the preceding vehicle keeps its speed and the
  // ego brakes down to it.
  const double closing = std::max(0.0, v1 - v_p);
  const bool holdable = gap1 - closing * closing / (2.0 * brake) - closing * dt >= floor + cfg.h_min * std::min(v1, v_p);
  return headway && holdable && d1 + ego_stop + floor <= d_p + lead_stop;
}

/// Adds friction brake (and ramps positive torque down) until the step is
/// safe or the deceleration limit is reached. Returns true if u changed.
inline bool apply_safety_filter(Control& u, const Control& prev, const VehicleState& x, double phi, double d_p,
                                double v_p, const EvModel& m, const OcpConfig& cfg, double lead_decel,
                                double dt) {
  const auto& p = m.vehicle;
  const double a_plan = acceleration_from_torque(u.Tf + u.Tr, u.Fb, x.v, phi, p);
  if (step_is_safe(x, a_plan, d_p, v_p, m, cfg, lead_decel, dt)) return false;
  // Largest safe acceleration by bisection; safety is monotone in a.
  double lo = p.a_min, hi = a_plan;
  if (step_is_safe(x, lo, d_p, v_p, m, cfg, lead_decel, dt)) {
    for (int i = 0; i < 50; ++i) {
      const double mid = 0.5 * (lo + hi);
      (step_is_safe(x, mid, d_p, v_p, m, cfg, lead_decel, dt) ? lo : hi) = mid;
    }
  }
  const double target = lo;
  const double dT = p.dT_max * dt;
  // Drop drive torque as far as the rate limit allows, then brake.
  if (u.Tf > 0.0) u.Tf = std::max(0.0, prev.Tf - dT);
  if (u.Tr > 0.0) u.Tr = std::max(0.0, prev.Tr - dT);
  const double a_nb = acceleration_from_torque(u.Tf + u.Tr, 0.0, x.v, phi, p);
  u.Fb = std::clamp((a_nb - target) * p.m, 0.0, p.F_b_max);
  // Never below the deceleration limit.
  const double a = acceleration_from_torque(u.Tf + u.Tr, u.Fb, x.v, phi, p);
  if (a < p.a_min) u.Fb = std::max(0.0, u.Fb - (p.a_min - a) * p.m);
  return true;
}

}  // namespace detail

/// Plant steps a closed-loop run covers on `sc`: whole update intervals
/// while preceding data remains.
[[nodiscard]] inline std::size_t closed_loop_steps(const Scenario& sc, const MpcConfig& cfg) {
  const std::size_t K = cfg.steps_per_update();
  if (K == 0 || sc.samples.size() < 2) return 0;
  return (sc.samples.size() - 1) / K * K;
}

/// Receding-horizon loop over the scenario. The ego starts `initial_gap`
/// behind the preceding vehicle at its speed and runs while a full update
/// interval of preceding data remains.
[[nodiscard]] inline RunLog run_closed_loop(const Scenario& sc, const EvModel& model_in, const MpcConfig& cfg) {
  cfg.validate();
  sc.validate();
  if (sc.duration() < cfg.update - 1e-9)
    throw std::invalid_argument("run_closed_loop: scenario shorter than one update interval");
  if (std::abs(sc.dt() - cfg.dt) > 1e-9)
    throw std::invalid_argument("run_closed_loop: scenario sample time differs from MPC dt");

  EvModel model = model_in;
  const OcpConfig ocfg = cfg.ocp_config();
  const std::size_t N = ocfg.N;
  const std::size_t K = cfg.steps_per_update();
  const double dt = cfg.dt;
  const OcpLayout lay{N};
  std::mt19937_64 rng(cfg.seed);
  NoiseConfig noise = cfg.noise;

  RunLog log;
  log.dt = dt;
  log.soc0 = cfg.soc0;

  const auto& s0 = sc.samples.front();
  VehicleState x{s0.d_p - cfg.initial_gap, s0.v_p, cfg.soc0};
  // Start as if cruising: torque that holds the current speed, split evenly.
  Control prev;
  {
    const double T = torque_from_acceleration(0.0, x.v, sc.grade.at(x.d), 0.0, model.vehicle);
    detail::clamp_torque_pair(T, model, x.v, prev.Tf, prev.Tr);
  }
  double a_prev = 0.0;

  VectorXd plan;       // last plan used for control
  std::size_t plan_offset = 0;  // stages of `plan` already applied
  bool have_plan = false;
  SignalMemory memory;
  std::vector<SignalDecision> decisions;

  const std::size_t n_samples = sc.samples.size();
  std::size_t step = 0;  // index into scenario samples
  for (std::size_t cycle = 0; step + K < n_samples; ++cycle) {
    const double t0 = sc.samples[step].t;
    if (cfg.bms) model.battery = cfg.bms(t0, model_in.battery);

    PrecedingPrediction pred = predict_preceding(sc, t0, N, dt);
    CycleRecord rec;
    rec.t = t0;
    if (noise.active()) rec.shift = apply_prediction_noise(pred, noise, rng);

    decisions = plan_signal_modes(x, a_prev, t0, sc.signals, pred, model, ocfg, &memory);
    const bool warm = cfg.warm_start && have_plan && plan_offset == K;
    VectorXd z0 = warm_start(warm ? &plan : nullptr, K, x, pred, {}, model, ocfg);
    const auto phi = grade_along(z0, lay, sc.grade);
    if (!sc.grade.pos.empty()) z0 = warm_start(warm ? &plan : nullptr, K, x, pred, phi, model, ocfg);

    const OcpProblem ocp = build_ocp(x, pred, decisions, phi, model, ocfg, prev.Tf, prev.Tr);
    const OcpSolve res = solve_ocp(ocp, z0, cfg.solver);
    if (cfg.on_solve) cfg.on_solve(ocp, z0, res);
    rec.status = res.solution.status;
    rec.iterations = res.iterations;
    rec.phases = res.phases;
    rec.solve_time = res.solution.wall_time;
    rec.objective = res.solution.objective;

    if (res.solution.optimal()) {
      plan = res.solution.x;
      plan_offset = 0;
      have_plan = true;
      rec.source = StepSource::Optimal;
    } else if (res.solution.best_feasible) {
      plan = *res.solution.best_feasible;
      plan_offset = 0;
      have_plan = true;
      rec.source = StepSource::BestFeasible;
    } else if (have_plan && plan_offset + K <= N) {
      rec.source = StepSource::ShiftedPlan;
    } else {
      have_plan = false;
      rec.source = StepSource::SafeStop;
    }
    log.cycles.push_back(rec);

    // Nearest intersection ahead with a decision in this cycle.
    int sig_id = -1;
    SignalMode sig_mode = SignalMode::Free;
    double best = kInf;
    for (const auto& dcs : decisions)
      if (dcs.d_sig > x.d && dcs.d_sig < best) {
        best = dcs.d_sig;
        sig_id = dcs.id;
        sig_mode = dcs.mode;
      }

    for (std::size_t i = 0; i < K; ++i, ++step) {
      const auto& truth = sc.samples[step];
      const double gap = truth.d_p - x.d;
      if (gap <= 0.0) {
        std::ostringstream os;
        os << "collision at t=" << truth.t << " (gap " << gap << " m)";
        throw CollisionError(os.str(), truth.t, gap);
      }
      Control u;
      double s1 = 0.0, s2 = 0.0;
      if (rec.source != StepSource::SafeStop) {
        const std::size_t k = plan_offset;
        u = {plan[lay.Tf(k)], plan[lay.Tr(k)], plan[lay.Fb(k)]};
        s1 = plan[lay.s1(k)];
        s2 = plan[lay.s2(k)];
        ++plan_offset;
      } else {
        u = detail::safe_stop_control(x, prev, gap, truth.v_p, model, ocfg, dt);
      }
      detail::enforce_same_sign(u);
      detail::enforce_actuator_limits(u, prev, x.v, model, dt);
      const double phi_now = sc.grade.at(x.d);
      const bool filtered = cfg.safety_filter && detail::apply_safety_filter(u, prev, x, phi_now, truth.d_p, truth.v_p,
                                                                             model, ocfg, cfg.lead_decel, dt);
      const PlantResult pr = plant_step(x, u, phi_now, model, dt);

      RunStep row;
      row.t = truth.t;
      row.d = x.d;
      row.v = x.v;
      row.soc = x.soc;
      row.a = pr.a;
      row.Tf = u.Tf;
      row.Tr = u.Tr;
      row.Fb = u.Fb;
      row.P_bat = pr.P_bat;
      row.I_bat = pr.I_bat;
      row.s1 = s1;
      row.s2 = s2;
      row.d_p = truth.d_p;
      row.v_p = truth.v_p;
      row.phi = phi_now;
      row.signal_id = sig_id;
      row.signal_mode = sig_mode;
      row.source = rec.source;
      row.filtered = filtered;
      row.cycle = cycle;
      log.steps.push_back(row);

      x = pr.next;
      a_prev = pr.a;
      prev = u;
    }
  }
  log.final_state = x;
  if (sc.samples[step].d_p - x.d <= 0.0) {
    std::ostringstream os;
    os << "collision at t=" << sc.samples[step].t;
    throw CollisionError(os.str(), sc.samples[step].t, sc.samples[step].d_p - x.d);
  }
  return log;
}

// ------------------------------------------------------------------ audits

struct AuditReport {
  std::size_t steps = 0;
  std::size_t hard_violations = 0;  // any hard constraint beyond tolerance
  std::size_t collisions = 0;
  std::size_t red_crossings = 0;
  // Steps where the realised gap fell below d_min + h_min v - max s2. The
  // near-side constraint is soft, so this is reported, not a failure.
  std::size_t headway_violations = 0;
  std::size_t rate_violations = 0;
  double max_s1 = 0.0;
  double max_s2 = 0.0;
  double min_gap = kInf;
  std::vector<std::string> notes;  // first few violations, for diagnostics

  [[nodiscard]] bool safe() const { return collisions == 0 && red_crossings == 0; }
  [[nodiscard]] bool clean() const { return safe() && hard_violations == 0 && rate_violations == 0; }
};

/// Checks every plant step of a run against the hard constraints, the
/// safety band and the signals. `tol` applies to the scaled constraint
/// forms used in the OCP.
[[nodiscard]] inline AuditReport audit_run(const RunLog& log, const Scenario& sc, const EvModel& m,
                                           const OcpConfig& cfg, double tol = 1e-6) {
  AuditReport rep;
  rep.steps = log.steps.size();
  const auto& p = m.vehicle;
  const double dT = p.dT_max * log.dt;
  const auto note = [&](const std::string& s) {
    if (rep.notes.size() < 10) rep.notes.push_back(s);
  };
  for (const auto& st : log.steps) {
    rep.max_s1 = std::max(rep.max_s1, st.s1);
    rep.max_s2 = std::max(rep.max_s2, st.s2);
  }
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const auto& st = log.steps[i];
    const double next_d = i + 1 < log.steps.size() ? log.steps[i + 1].d : log.final_state.d;
    const double next_v = i + 1 < log.steps.size() ? log.steps[i + 1].v : log.final_state.v;
    const double next_soc = i + 1 < log.steps.size() ? log.steps[i + 1].soc : log.final_state.soc;
    const double w = motor_speed(st.v, p);
    bool bad = false;
    const auto check = [&](bool ok, const char* what) {
      if (!ok) {
        bad = true;
        std::ostringstream os;
        os << what << " at t=" << st.t;
        note(os.str());
      }
    };
    check(next_v >= -tol && next_v <= p.v_max + tol, "speed bound");
    check(1e-2 * p.n * next_v <= 1e-2 * p.omega_max + tol, "motor speed");
    check(next_soc >= m.battery.soc_min - tol && next_soc <= m.battery.soc_max + tol, "soc bound");
    check(st.Fb >= -tol && st.Fb <= p.F_b_max + tol, "brake force");
    check(1e-2 * st.Tf * st.Tr >= -tol, "side slip");
    check(st.a >= p.a_min - tol && st.a <= p.a_max + tol, "acceleration");
    check(1e-3 * w * std::abs(st.Tf) <= 1e-3 * m.powertrain.front.P_rated + tol &&
              std::abs(st.Tf) <= m.powertrain.front.T_stall + tol,
          "front envelope");
    check(1e-3 * w * std::abs(st.Tr) <= 1e-3 * m.powertrain.rear.P_rated + tol &&
              std::abs(st.Tr) <= m.powertrain.rear.T_stall + tol,
          "rear envelope");
    check(st.P_bat <= m.battery.max_power(), "battery power");
    if (bad) ++rep.hard_violations;

    if (i > 0) {
      const auto& pv = log.steps[i - 1];
      if (std::abs(st.Tf - pv.Tf) > dT + tol || std::abs(st.Tr - pv.Tr) > dT + tol) {
        ++rep.rate_violations;
        std::ostringstream os;
        os << "torque rate at t=" << st.t;
        note(os.str());
      }
    }

    const double gap = st.d_p - st.d;
    rep.min_gap = std::min(rep.min_gap, gap);
    if (gap <= 0.0) ++rep.collisions;
    if (gap < cfg.d_min + cfg.h_min * st.v - rep.max_s2 - tol) {
      ++rep.headway_violations;
      std::ostringstream os;
      os << "headway at t=" << st.t << " gap=" << gap;
      note(os.str());
    }
    for (const auto& sig : sc.signals) {
      // Crossing during [t, t + dt) counts when the light is red at both ends.
      if (st.d < sig.d_sig() && next_d >= sig.d_sig() && !sig.is_green(st.t) &&
          !sig.is_green(st.t + log.dt)) {
        ++rep.red_crossings;
        std::ostringstream os;
        os << "red crossing of signal " << sig.id() << " at t=" << st.t;
        note(os.str());
      }
    }
  }
  return rep;
}

// ------------------------------------------------------------------ output

inline void write_run_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(10);
  out << "t,d,v,soc,a,T_f,T_r,P_bat,F_b,I_bat,s1,s2,d_p,v_p,phi,signal_id,signal_mode,source,filtered,cycle\n";
  for (const auto& s : log.steps)
    out << s.t << ',' << s.d << ',' << s.v << ',' << s.soc << ',' << s.a << ',' << s.Tf << ',' << s.Tr
        << ',' << s.P_bat << ',' << s.Fb << ',' << s.I_bat << ',' << s.s1 << ',' << s.s2 << ',' << s.d_p
        << ',' << s.v_p << ',' << s.phi << ',' << s.signal_id << ',' << to_string(s.signal_mode) << ','
        << to_string(s.source) << ',' << int(s.filtered) << ',' << s.cycle << '\n';
}

inline void write_cycles_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(10);
  out << "t,status,source,iterations,phases,solve_time,objective,shift\n";
  for (const auto& c : log.cycles)
    out << c.t << ',' << to_string(c.status) << ',' << to_string(c.source) << ',' << c.iterations << ','
        << c.phases << ',' << c.solve_time << ',' << c.objective << ',' << c.shift << '\n';
}

struct RunSummary {
  double duration = 0.0;
  double distance = 0.0;
  double soc0 = 0.0;
  double final_soc = 0.0;
  double traction_energy = 0.0;  // J, integral of P_bat
  std::size_t cycles = 0;
  std::size_t non_optimal = 0;
  double mean_solve_time = 0.0;
  double median_solve_time = 0.0;
  double max_solve_time = 0.0;
};

[[nodiscard]] inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  const double hi = v[h];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h)));
}

[[nodiscard]] inline RunSummary summarize(const RunLog& log) {
  RunSummary s;
  s.soc0 = log.soc0;
  s.final_soc = log.final_state.soc;
  s.duration = static_cast<double>(log.steps.size()) * log.dt;
  if (!log.steps.empty()) s.distance = log.final_state.d - log.steps.front().d;
  for (const auto& st : log.steps) s.traction_energy += st.P_bat * log.dt;
  s.cycles = log.cycles.size();
  std::vector<double> times;
  for (const auto& c : log.cycles) {
    times.push_back(c.solve_time);
    if (c.status != SolveStatus::Optimal) ++s.non_optimal;
  }
  if (!times.empty()) {
    double sum = 0.0;
    for (double t : times) sum += t;
    s.mean_solve_time = sum / static_cast<double>(times.size());
    s.median_solve_time = median(times);
    s.max_solve_time = *std::max_element(times.begin(), times.end());
  }
  return s;
}

}  // namespace ecodrive
