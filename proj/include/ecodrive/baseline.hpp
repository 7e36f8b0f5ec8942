#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "ecodrive/mpc.hpp"

namespace ecodrive {

struct SplitRatio {
  double N_f = 1.0;
  double N_r = 1.0;

  void validate() const {
    if (!(N_f >= 0.0 && N_r >= 0.0 && N_f + N_r > 0.0))
      throw std::invalid_argument("SplitRatio: need N_f, N_r >= 0 and N_f + N_r > 0");
  }
};

struct TorqueSplit {
  double Tf = 0.0;
  double Tr = 0.0;
};

class SplitOverflowError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Fixed-ratio split with overflow: a motor pushed past its envelope is
/// clamped and the excess goes to the other one. The sum is exactly T_d.
[[nodiscard]] inline TorqueSplit rule_based_split(double T_d, const SplitRatio& r, double ef, double er) {
  r.validate();
  if (std::abs(T_d) > ef + er)
    throw SplitOverflowError("rule_based_split: demand " + std::to_string(T_d) + " N*m exceeds combined envelope " +
                             std::to_string(ef + er));
  TorqueSplit s;
  s.Tf = r.N_f / (r.N_f + r.N_r) * T_d;
  s.Tr = T_d - s.Tf;
  if (std::abs(s.Tf) > ef) {
    s.Tf = std::copysign(ef, T_d);
    s.Tr = T_d - s.Tf;
  } else if (std::abs(s.Tr) > er) {
    s.Tr = std::copysign(er, T_d);
    s.Tf = T_d - s.Tr;
  }
  return s;
}

[[nodiscard]] inline TorqueSplit rule_based_split(double T_d, const SplitRatio& r, double omega, const Powertrain& pt) {
  return rule_based_split(T_d, r, max_torque_envelope(pt.front, omega), max_torque_envelope(pt.rear, omega));
}

struct OptimalSplit {
  double Tf = 0.0;
  double Tr = 0.0;
  double P = 0.0;  // W, battery side
};

/// Split of T_d between the motors minimising the fitted battery-side power
/// at motor speed omega, with both torques on the same side of zero. Coarse
/// scan, then golden-section refinement around the best scan point.
[[nodiscard]] inline OptimalSplit optimal_split(double T_d, double omega, const Powertrain& pt) {
  const double ef = max_torque_envelope(pt.front, omega);
  const double er = max_torque_envelope(pt.rear, omega);
  if (std::abs(T_d) > ef + er) throw SplitOverflowError("optimal_split: demand exceeds combined envelope");
  double lo = 0.0, hi = 0.0;
  if (T_d >= 0.0) {
    lo = std::max(0.0, T_d - er);
    hi = std::min(ef, T_d);
  } else {
    lo = std::max(-ef, T_d);
    hi = std::min(0.0, T_d + er);
  }
  const auto power = [&](double Tf) { return pt.poly_front(omega, Tf) + pt.poly_rear(omega, T_d - Tf); };
  constexpr int kScan = 64;
  const double h = (hi - lo) / kScan;
  int best = 0;
  double best_p = power(lo);
  for (int i = 1; i <= kScan; ++i) {
    const double p = power(lo + h * i);
    if (p < best_p) {
      best_p = p;
      best = i;
    }
  }
  double a = lo + h * std::max(0, best - 1);
  double b = lo + h * std::min(kScan, best + 1);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double pc = power(c), pd = power(d);
  while (b - a > 1e-6) {
    if (pc < pd) {
      b = d;
      d = c;
      pd = pc;
      c = b - g * (b - a);
      pc = power(c);
    } else {
      a = c;
      c = d;
      pc = pd;
      d = a + g * (b - a);
      pd = power(d);
    }
  }
  OptimalSplit out;
  out.Tf = 0.5 * (a + b);
  out.P = power(out.Tf);
  if (best_p < out.P) {
    out.Tf = lo + h * best;
    out.P = best_p;
  }
  out.Tr = T_d - out.Tf;
  return out;
}

// ------------------------------------------------------------------ baseline

struct BaselineReport {
  RunLog log;
  std::size_t saturated_steps = 0;  // traction demand clipped to the envelope
};

/// Replays the preceding vehicle's own trajectory through the ego powertrain
/// with the fixed-ratio split. Regenerative torque is used up to the combined
/// envelope and the friction brake covers the rest. `steps` limits the
/// replay (default: the whole scenario).
[[nodiscard]] inline BaselineReport baseline_run(const Scenario& sc, const EvModel& m, double soc0 = 0.8,
                                                 const SplitRatio& ratio = {}, std::size_t steps = 0) {
  sc.validate();
  ratio.validate();
  const std::size_t n = sc.samples.size() - 1;
  if (steps == 0 || steps > n) steps = n;
  const double dt = sc.dt();
  const auto& p = m.vehicle;
  BaselineReport rep;
  rep.log.dt = dt;
  rep.log.soc0 = soc0;
  rep.log.label = "baseline";
  double soc = soc0;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto& s = sc.samples[k];
    const double v = s.v_p;
    const double a = (sc.samples[k + 1].v_p - v) / dt;
    const double phi = sc.grade.at(s.d_p);
    const double w = std::clamp(motor_speed(v, p), 0.0, p.omega_max);
    const double ef = max_torque_envelope(m.powertrain.front, w);
    const double er = max_torque_envelope(m.powertrain.rear, w);
    double T_d = torque_from_acceleration(a, v, phi, 0.0, p);
    double Fb = 0.0;
    if (T_d < -(ef + er)) {
      // Brake force for the torque the motors cannot absorb.
      Fb = (-(ef + er) - T_d) * p.n;
      T_d = -(ef + er);
    } else if (T_d > ef + er) {
      T_d = ef + er;
      ++rep.saturated_steps;
    }
    const TorqueSplit split = rule_based_split(T_d, ratio, ef, er);
    const double P = m.powertrain.poly_front(w, split.Tf) + m.powertrain.poly_rear(w, split.Tr);
    const double I = battery_current(P, m.battery);

    RunStep row;
    row.t = s.t;
    row.d = s.d_p;
    row.v = v;
    row.soc = soc;
    row.a = a;
    row.Tf = split.Tf;
    row.Tr = split.Tr;
    row.Fb = Fb;
    row.P_bat = P;
    row.I_bat = I;
    row.d_p = s.d_p;
    row.v_p = v;
    row.phi = phi;
    row.source = StepSource::Baseline;
    rep.log.steps.push_back(row);
    soc = soc_step(soc, I, dt, m.battery);
  }
  rep.log.final_state = {sc.samples[steps].d_p, sc.samples[steps].v_p, soc};
  return rep;
}

// ------------------------------------------------------------------ metrics

/// Relative SOC improvement of the ego over the preceding vehicle, percent.
[[nodiscard]] inline double compute_r_soc(double soc_e, double soc_p, double soc_0) {
  if (soc_0 == soc_p) throw std::domain_error("compute_r_soc: preceding vehicle consumed no charge");
  return (soc_e - soc_p) / (soc_0 - soc_p) * 100.0;
}

/// Relative traction-energy improvement of the optimal split, percent.
[[nodiscard]] inline double compute_r_m(double P_rule, double P_opt) {
  if (P_rule == 0.0) throw std::domain_error("compute_r_m: zero rule-based energy");
  return (P_rule - P_opt) / P_rule * 100.0;
}

/// Integrated battery-side energy of a run, J.
[[nodiscard]] inline double traction_energy(const RunLog& log) {
  double e = 0.0;
  for (const auto& s : log.steps) e += s.P_bat * log.dt;
  return e;
}

/// The run's speed profile with its total motor torque re-split by the
/// fixed-ratio rule. Battery power, current and SOC are recomputed.
[[nodiscard]] inline RunLog resplit_run(const RunLog& log, const EvModel& m, const SplitRatio& ratio = {}) {
  RunLog out = log;
  out.label = "ablation";
  double soc = log.soc0;
  for (auto& s : out.steps) {
    const double w = std::clamp(motor_speed(s.v, m.vehicle), 0.0, m.vehicle.omega_max);
    const TorqueSplit split = rule_based_split(s.Tf + s.Tr, ratio, w, m.powertrain);
    s.Tf = split.Tf;
    s.Tr = split.Tr;
    s.P_bat = m.powertrain.poly_front(w, split.Tf) + m.powertrain.poly_rear(w, split.Tr);
    s.I_bat = battery_current(s.P_bat, m.battery);
    s.soc = soc;
    soc = soc_step(soc, s.I_bat, log.dt, m.battery);
  }
  out.final_state.soc = soc;
  return out;
}

/// Energy of the run's speed profile under the fixed-ratio rule, J.
[[nodiscard]] inline double rule_split_energy(const RunLog& log, const EvModel& m, const SplitRatio& ratio = {}) {
  return traction_energy(resplit_run(log, m, ratio));
}

struct Comparison {
  double soc0 = 0.0;
  double soc_ego = 0.0;
  double soc_baseline = 0.0;
  double r_soc = 0.0;       // percent
  double energy_opt = 0.0;  // J
  double energy_rule = 0.0; // J
  double r_m = 0.0;         // percent
};

/// R_SOC against a baseline replay over the same time window, and R_m for
/// the run's own speed profile.
[[nodiscard]] inline Comparison compare_to_baseline(const RunLog& run, const Scenario& sc, const EvModel& m,
                                                    const SplitRatio& ratio = {}) {
  const BaselineReport base = baseline_run(sc, m, run.soc0, ratio, run.steps.size());
  Comparison c;
  c.soc0 = run.soc0;
  c.soc_ego = run.final_state.soc;
  c.soc_baseline = base.log.final_state.soc;
  c.r_soc = compute_r_soc(c.soc_ego, c.soc_baseline, c.soc0);
  c.energy_opt = traction_energy(run);
  c.energy_rule = rule_split_energy(run, m, ratio);
  c.r_m = compute_r_m(c.energy_rule, c.energy_opt);
  return c;
}

}  // namespace ecodrive
