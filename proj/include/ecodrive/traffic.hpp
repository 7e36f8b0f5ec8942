#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecodrive/csv.hpp"

namespace ecodrive {

/// Raised for malformed or inconsistent scenario data; `row()` is the 1-based
/// source line (or sample index when the data did not come from a file).
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& what, std::size_t row)
      : std::runtime_error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  [[nodiscard]] std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

struct TrafficSample {
  double t = 0.0;    // s
  double d_p = 0.0;  // m
  double v_p = 0.0;  // m/s
  double a_p = 0.0;  // m/s^2
};

/// Fixed-time signal. The light is green at time t iff, for some window,
///   (t - green_start) mod cycle < green_end - green_start.
class SignalSchedule {
 public:
  struct Window {
    double start = 0.0;  // s, within [0, cycle)
    double end = 0.0;    // s, start < end <= start + cycle
  };
  struct Interval {
    double t_start = 0.0;
    double t_end = 0.0;
    bool green = false;
  };

  SignalSchedule() = default;
  SignalSchedule(int id, double d_sig, double cycle, std::vector<Window> windows)
      : id_(id), d_sig_(d_sig), cycle_(cycle), windows_(std::move(windows)) {
    validate();
  }

  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] double d_sig() const { return d_sig_; }
  [[nodiscard]] double cycle() const { return cycle_; }
  [[nodiscard]] const std::vector<Window>& windows() const { return windows_; }

  [[nodiscard]] bool is_green(double t) const {
    for (const auto& w : windows_)
      if (positive_mod(t - w.start) < w.end - w.start) return true;
    return false;
  }

  /// Earliest time >= t at which the light is red.
  [[nodiscard]] double red_onset_after(double t) const {
    return is_green(t) ? next_switch(t) : t;
  }

  /// Earliest time >= t at which the light is green.
  [[nodiscard]] double green_onset_after(double t) const {
    return is_green(t) ? t : next_switch(t);
  }

  /// Contiguous phase intervals covering [t0, t1].
  [[nodiscard]] std::vector<Interval> intervals(double t0, double t1) const {
    std::vector<Interval> out;
    double t = t0;
    while (t < t1) {
      const bool g = is_green(t);
      const double e = std::min(next_switch(t), t1);
      out.push_back({t, e, g});
      t = e;
    }
    return out;
  }

  void validate() const {
    if (!(cycle_ > 0.0)) throw std::invalid_argument("signal " + std::to_string(id_) + ": cycle must be positive");
    if (windows_.empty()) throw std::invalid_argument("signal " + std::to_string(id_) + ": no green window");
    double total = 0.0;
    for (std::size_t i = 0; i < windows_.size(); ++i) {
      const auto& w = windows_[i];
      if (!(w.start >= 0.0 && w.start < cycle_ && w.end > w.start && w.end - w.start < cycle_))
        throw std::invalid_argument("signal " + std::to_string(id_) +
                                    ": green window must satisfy 0 <= start < cycle and 0 < end - start < cycle");
      total += w.end - w.start;
      for (std::size_t j = 0; j < i; ++j) {
        const auto& o = windows_[j];
        for (double shift : {-cycle_, 0.0, cycle_})
          if (w.start < o.end + shift && o.start + shift < w.end)
            throw std::invalid_argument("signal " + std::to_string(id_) + ": overlapping green windows");
      }
    }
    if (!(total < cycle_)) throw std::invalid_argument("signal " + std::to_string(id_) + ": no red time in cycle");
  }

 private:
  [[nodiscard]] double positive_mod(double x) const {
    const double r = std::fmod(x, cycle_);
    return r < 0.0 ? r + cycle_ : r;
  }

  /// Next time > t at which the phase differs from the phase at t.
  [[nodiscard]] double next_switch(double t) const {
    const bool g = is_green(t);
    double probe = t;
    for (std::size_t guard = 0; guard < 4 * windows_.size() + 4; ++guard) {
      double nxt = probe + cycle_;
      for (const auto& w : windows_) {
        for (double edge : {w.start, w.end}) {
          double b = edge + std::floor((probe - edge) / cycle_) * cycle_;
          while (b <= probe) b += cycle_;
          nxt = std::min(nxt, b);
        }
      }
      if (is_green(nxt) != g) return nxt;
      probe = nxt;
    }
    return probe;
  }

  int id_ = 0;
  double d_sig_ = 0.0;
  double cycle_ = 1.0;
  std::vector<Window> windows_;
};

/// Road grade as a function of position, piecewise linear between knots and
/// held constant beyond them. Empty means flat.
struct GradeProfile {
  std::vector<double> pos;  // m, strictly increasing
  std::vector<double> phi;  // rad

  [[nodiscard]] double at(double s) const {
    if (pos.empty()) return 0.0;
    if (s <= pos.front()) return phi.front();
    if (s >= pos.back()) return phi.back();
    const auto it = std::upper_bound(pos.begin(), pos.end(), s);
    const auto hi = static_cast<std::size_t>(it - pos.begin());
    const double w = (s - pos[hi - 1]) / (pos[hi] - pos[hi - 1]);
    return (1.0 - w) * phi[hi - 1] + w * phi[hi];
  }

  void validate() const {
    if (pos.size() != phi.size()) throw std::invalid_argument("grade profile: size mismatch");
    for (std::size_t i = 1; i < pos.size(); ++i)
      if (!(pos[i] > pos[i - 1])) throw ScenarioError("grade profile: pos_m must be strictly increasing", i + 1);
  }
};

struct Scenario {
  std::vector<TrafficSample> samples;
  std::vector<SignalSchedule> signals;  // sorted by d_sig
  GradeProfile grade;
  double v_max = 20.0;

  [[nodiscard]] double dt() const { return samples.size() > 1 ? samples[1].t - samples[0].t : 0.0; }
  [[nodiscard]] double t_begin() const { return samples.front().t; }
  [[nodiscard]] double t_end() const { return samples.back().t; }
  [[nodiscard]] double duration() const { return t_end() - t_begin(); }

  /// Checks the sample invariants. `lines` optionally maps sample index to a
  /// source line for error reporting.
  void validate(const std::vector<std::size_t>& lines = {}) const {
    const auto row = [&](std::size_t k) { return k < lines.size() ? lines[k] : k + 1; };
    if (samples.size() < 2) throw ScenarioError("scenario needs at least two samples", samples.size());
    const double h = dt();
    if (!(h > 0.0)) throw ScenarioError("t must be strictly increasing", row(1));
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      if (!(std::isfinite(s.t) && std::isfinite(s.d_p) && std::isfinite(s.v_p) && std::isfinite(s.a_p)))
        throw ScenarioError("non-finite value", row(k));
      if (s.v_p < 0.0) throw ScenarioError("v_p must be non-negative", row(k));
      if (k == 0) continue;
      const auto& p = samples[k - 1];
      if (!(s.t > p.t)) throw ScenarioError("t must be strictly increasing", row(k));
      if (std::abs(s.t - p.t - h) > 1e-6 * h) throw ScenarioError("t must be uniformly spaced", row(k));
      if (s.d_p < p.d_p) throw ScenarioError("d_p must be non-decreasing", row(k));
      const double tol = 1e-6 * std::max(1.0, std::abs(s.d_p));
      if (std::abs(s.d_p - p.d_p - p.v_p * h) > tol)
        throw ScenarioError("d_p inconsistent with v_p (forward Euler)", row(k));
    }
    if (!(v_max > 0.0)) throw std::invalid_argument("scenario: v_max must be positive");
    for (const auto& sig : signals) sig.validate();
    grade.validate();
  }
};

// ------------------------------------------------------------------ files

inline void save_samples_csv(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "t,d_p,v_p,a_p\n";
  for (const auto& r : s.samples) out << r.t << ',' << r.d_p << ',' << r.v_p << ',' << r.a_p << '\n';
}

inline void save_signals_csv(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "id,d_sig,cycle_s,green_start_s,green_end_s\n";
  for (const auto& sig : s.signals)
    for (const auto& w : sig.windows())
      out << sig.id() << ',' << sig.d_sig() << ',' << sig.cycle() << ',' << w.start << ',' << w.end << '\n';
}

inline void save_grade_csv(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "pos_m,phi_rad\n";
  for (std::size_t i = 0; i < s.grade.pos.size(); ++i) out << s.grade.pos[i] << ',' << s.grade.phi[i] << '\n';
}

namespace detail {

inline double required(const std::optional<double>& v, const std::string& file, std::size_t line,
                       std::size_t col) {
  if (!v) throw CsvError(file, line, col, "empty field");
  return *v;
}

}  // namespace detail

[[nodiscard]] inline std::vector<SignalSchedule> load_signals_csv(const std::string& path) {
  const CsvTable t = read_csv(path, {"id", "d_sig", "cycle_s", "green_start_s", "green_end_s"});
  struct Acc {
    double d_sig = 0.0, cycle = 0.0;
    std::vector<SignalSchedule::Window> windows;
    std::size_t line = 0;
  };
  std::map<int, Acc> by_id;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::size_t line = t.line_numbers[r];
    double f[5];
    for (std::size_t c = 0; c < 5; ++c) f[c] = detail::required(t.rows[r][c], path, line, c + 1);
    if (f[0] != std::floor(f[0])) throw CsvError(path, line, 1, "id must be an integer");
    const int id = static_cast<int>(f[0]);
    auto [it, fresh] = by_id.try_emplace(id);
    Acc& a = it->second;
    if (fresh) {
      a.d_sig = f[1];
      a.cycle = f[2];
      a.line = line;
    } else if (a.d_sig != f[1] || a.cycle != f[2]) {
      throw ScenarioError("signal " + std::to_string(id) + ": d_sig/cycle differ between rows", line);
    }
    a.windows.push_back({f[3], f[4]});
  }
  std::vector<SignalSchedule> out;
  for (auto& [id, a] : by_id) {
    try {
      out.emplace_back(id, a.d_sig, a.cycle, a.windows);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(e.what(), a.line);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.d_sig() < y.d_sig(); });
  return out;
}

[[nodiscard]] inline GradeProfile load_grade_csv(const std::string& path) {
  const CsvTable t = read_csv(path, {"pos_m", "phi_rad"});
  GradeProfile g;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::size_t line = t.line_numbers[r];
    g.pos.push_back(detail::required(t.rows[r][0], path, line, 1));
    g.phi.push_back(detail::required(t.rows[r][1], path, line, 2));
    if (r > 0 && !(g.pos[r] > g.pos[r - 1])) throw ScenarioError("pos_m must be strictly increasing", line);
  }
  return g;
}

/// Reads a scenario. `path` is either a samples CSV (t,d_p,v_p,a_p) or a
/// directory holding scenario.csv and optionally signals.csv and grade.csv.
/// Explicit signal and grade paths override the directory lookup.
[[nodiscard]] inline Scenario load_scenario(const std::string& path, std::string signals_path = {},
                                            std::string grade_path = {}) {
  namespace fs = std::filesystem;
  std::string samples_path = path;
  if (fs::is_directory(path)) {
    samples_path = (fs::path(path) / "scenario.csv").string();
    if (signals_path.empty() && fs::exists(fs::path(path) / "signals.csv"))
      signals_path = (fs::path(path) / "signals.csv").string();
    if (grade_path.empty() && fs::exists(fs::path(path) / "grade.csv"))
      grade_path = (fs::path(path) / "grade.csv").string();
  }
  const CsvTable t = read_csv(samples_path, {"t", "d_p", "v_p", "a_p"});
  Scenario s;
  s.samples.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::size_t line = t.line_numbers[r];
    const auto& row = t.rows[r];
    s.samples.push_back({detail::required(row[0], samples_path, line, 1),
                         detail::required(row[1], samples_path, line, 2),
                         detail::required(row[2], samples_path, line, 3),
                         detail::required(row[3], samples_path, line, 4)});
  }
  if (!signals_path.empty()) s.signals = load_signals_csv(signals_path);
  if (!grade_path.empty()) s.grade = load_grade_csv(grade_path);
  s.validate(t.line_numbers);
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_samples_csv(s, (fs::path(dir) / "scenario.csv").string());
  save_signals_csv(s, (fs::path(dir) / "signals.csv").string());
  save_grade_csv(s, (fs::path(dir) / "grade.csv").string());
}

// -------------------------------------------------------------- generator

struct DriverParams {
  double v_des_min = 12.0;  // m/s, desired speed drawn per segment
  double v_des_max = 17.0;
  double a_acc = 1.5;       // m/s^2
  double b_comf = 2.0;      // m/s^2
  double a_floor = -3.0;    // m/s^2, hard braking limit
  double headway = 1.5;     // s
  double s0 = 2.0;          // m, standstill gap to the stop line
  double delta = 4.0;
  double slowdown_probability = 0.5;  // per segment
  double slowdown_v_min = 6.0;
  double slowdown_v_max = 10.0;
  double slowdown_s_min = 5.0;  // duration, s
  double slowdown_s_max = 10.0;
};

struct CorridorConfig {
  int n_intersections = 3;
  double first_signal_min = 250.0;  // m from the preceding vehicle's start
  double first_signal_max = 400.0;
  double spacing_min = 400.0;  // m
  double spacing_max = 600.0;
  double cycle_min = 60.0;  // s
  double cycle_max = 90.0;
  double green_fraction = 0.5;
  double duration = 180.0;  // s
  double dt = 0.1;          // s
  double d_p0 = 40.0;       // m
  double v_p0_min = 8.0;    // m/s
  double v_p0_max = 12.0;
  double v_max = 20.0;
  DriverParams driver;

  void validate() const {
    if (n_intersections < 0) throw std::invalid_argument("corridor: n_intersections must be >= 0");
    if (!(spacing_min > 0.0 && spacing_max >= spacing_min))
      throw std::invalid_argument("corridor: bad spacing range");
    if (!(cycle_min > 0.0 && cycle_max >= cycle_min)) throw std::invalid_argument("corridor: bad cycle range");
    if (!(green_fraction > 0.0 && green_fraction < 1.0))
      throw std::invalid_argument("corridor: green_fraction must be in (0, 1)");
    if (!(dt > 0.0 && duration >= dt)) throw std::invalid_argument("corridor: bad dt/duration");
    if (!(driver.v_des_max <= v_max && driver.v_des_min > 0.0 && driver.v_des_max >= driver.v_des_min))
      throw std::invalid_argument("corridor: desired speeds must lie in (0, v_max]");
    if (!(driver.a_acc > 0.0 && driver.b_comf > 0.0 && driver.a_floor < 0.0))
      throw std::invalid_argument("corridor: bad driver accelerations");
  }
};

namespace detail {

inline constexpr double kInfTime = 1e30;

inline double idm_free(double v, double v_des, const DriverParams& d) {
  return d.a_acc * (1.0 - std::pow(std::max(v, 0.0) / v_des, d.delta));
}

inline double idm_stop(double v, double gap, double v_des, const DriverParams& d) {
  const double s_star = d.s0 + std::max(0.0, v * d.headway + v * v / (2.0 * std::sqrt(d.a_acc * d.b_comf)));
  const double g = std::max(gap, 0.1);
  return d.a_acc * (1.0 - std::pow(std::max(v, 0.0) / v_des, d.delta) - (s_star / g) * (s_star / g));
}

/// Time to cover `gap` from speed v under the free-road law, capped at limit.
inline double free_arrival_time(double gap, double v, double v_des, double dt, double limit,
                                const DriverParams& d) {
  double t = 0.0, s = 0.0;
  while (s < gap) {
    if (t > limit) return kInfTime;
    s += v * dt;
    v = std::max(0.0, v + idm_free(v, v_des, d) * dt);
    t += dt;
  }
  return t;
}

}  // namespace detail

/// Synthetic corridor: a preceding vehicle driven by an intelligent-driver
/// law through fixed-time signals. The stop line acts as a standing obstacle
/// unless the vehicle has committed to pass; commitment requires reaching the
/// line at free-road acceleration at least 1 s before red onset, after which
/// the vehicle no longer decelerates until it has crossed.
[[nodiscard]] inline Scenario generate_corridor_scenario(std::uint64_t seed, const CorridorConfig& cfg = {}) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const DriverParams& drv = cfg.driver;

  Scenario sc;
  sc.v_max = cfg.v_max;
  double d_sig = cfg.d_p0 + uniform(cfg.first_signal_min, cfg.first_signal_max);
  for (int i = 0; i < cfg.n_intersections; ++i) {
    const double cycle = std::round(uniform(cfg.cycle_min, cfg.cycle_max));
    const double green = std::round(cfg.green_fraction * cycle);
    const double start = std::floor(uniform(0.0, cycle));
    sc.signals.emplace_back(i + 1, std::round(d_sig), cycle,
                            std::vector<SignalSchedule::Window>{{start, start + green}});
    d_sig += uniform(cfg.spacing_min, cfg.spacing_max);
  }

  // Segment s ends at signal s (the last segment is open-ended).
  const std::size_t n_seg = sc.signals.size() + 1;
  std::vector<double> v_des(n_seg);
  struct Slowdown {
    double pos = 0.0, v = 0.0, length = 0.0;
  };
  std::vector<std::optional<Slowdown>> events(n_seg);
  constexpr double kCommitWindow = 250.0;  // m before a stop line
  for (std::size_t s = 0; s < n_seg; ++s) {
    v_des[s] = uniform(drv.v_des_min, drv.v_des_max);
    const double seg_begin = s == 0 ? cfg.d_p0 : sc.signals[s - 1].d_sig();
    const double seg_end = s < sc.signals.size() ? sc.signals[s].d_sig() : seg_begin + cfg.spacing_max;
    const double lo = seg_begin + 0.2 * (seg_end - seg_begin);
    const double hi = std::min(seg_begin + 0.6 * (seg_end - seg_begin), seg_end - kCommitWindow - 50.0);
    const double draw = uniform(0.0, 1.0);
    const double pos = uniform(0.0, 1.0), v = uniform(drv.slowdown_v_min, drv.slowdown_v_max),
                 len = uniform(drv.slowdown_s_min, drv.slowdown_s_max);
    if (draw < drv.slowdown_probability && hi > lo) events[s] = Slowdown{lo + pos * (hi - lo), v, len};
  }

  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
  double d = cfg.d_p0;
  double v = uniform(cfg.v_p0_min, cfg.v_p0_max);
  std::size_t seg = 0;
  bool committed = false;
  double slow_until = -1.0;
  double slow_v = 0.0;
  std::vector<double> ts, ds, vs;
  ts.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    ts.push_back(t);
    ds.push_back(d);
    vs.push_back(v);
    if (k == steps) break;

    while (seg < sc.signals.size() && d >= sc.signals[seg].d_sig()) {
      ++seg;
      committed = false;
    }
    double vd = v_des[seg];
    if (events[seg] && d >= events[seg]->pos && slow_until < 0.0) {
      slow_until = t + events[seg]->length;
      slow_v = events[seg]->v;
      events[seg].reset();
    }
    if (t < slow_until) vd = std::min(vd, slow_v);
    else slow_until = -1.0;

    double a = detail::idm_free(v, vd, drv);
    if (seg < sc.signals.size()) {
      const SignalSchedule& sig = sc.signals[seg];
      const double gap = sig.d_sig() - d;
      if (!committed && gap <= kCommitWindow && sig.is_green(t)) {
        const double red = sig.red_onset_after(t);
        committed = t + detail::free_arrival_time(gap, v, vd, cfg.dt, red - t, drv) <= red - 1.0;
      }
      if (committed) a = std::max(a, 0.0);
      else a = std::min(a, detail::idm_stop(v, gap, vd, drv));
    }
    a = std::clamp(a, drv.a_floor, drv.a_acc);
    const double v_next = std::clamp(v + a * cfg.dt, 0.0, cfg.v_max);
    d += v * cfg.dt;
    v = v_next;
  }

  sc.samples.resize(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double a = k + 1 < ts.size() ? (vs[k + 1] - vs[k]) / cfg.dt : 0.0;
    sc.samples[k] = {ts[k], ds[k], vs[k], a};
  }
  sc.validate();
  return sc;
}

// ------------------------------------------------------------- prediction

/// Preceding-vehicle trajectory over a horizon: N + 1 knots at spacing dt,
/// forward-Euler consistent (d(k+1) = d(k) + v(k) dt, a(k) = (v(k+1) - v(k)) / dt).
struct PrecedingPrediction {
  double dt = 0.1;
  std::vector<double> d;
  std::vector<double> v;
  std::vector<double> a;

  [[nodiscard]] std::size_t steps() const { return v.empty() ? 0 : v.size() - 1; }

  /// Rebuilds d from d(0) and a from v.
  void reintegrate() {
    const std::size_t n = v.size();
    d.resize(n);
    a.assign(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      d[k + 1] = d[k] + v[k] * dt;
      a[k] = (v[k + 1] - v[k]) / dt;
    }
  }
};

/// Ground-truth slice starting at t0. Beyond the last sample the preceding
/// vehicle holds its final speed.
[[nodiscard]] inline PrecedingPrediction predict_preceding(const Scenario& s, double t0, std::size_t N,
                                                           double dt) {
  const double h = s.dt();
  if (!(std::abs(dt - h) <= 1e-9 * h))
    throw std::invalid_argument("predict_preceding: dt must equal the scenario sample spacing");
  if (!(t0 >= s.t_begin() - 1e-9 && t0 <= s.t_end() + 1e-9))
    throw std::out_of_range("predict_preceding: t0 outside scenario time range");
  const auto k0 = static_cast<std::size_t>(std::llround((t0 - s.t_begin()) / h));
  PrecedingPrediction p;
  p.dt = dt;
  p.d.resize(N + 1);
  p.v.resize(N + 1);
  p.a.resize(N + 1);
  const std::size_t last = s.samples.size() - 1;
  for (std::size_t k = 0; k <= N; ++k) {
    const std::size_t i = k0 + k;
    if (i <= last) {
      p.d[k] = s.samples[i].d_p;
      p.v[k] = s.samples[i].v_p;
      p.a[k] = i < last ? s.samples[i].a_p : 0.0;
    } else {
      p.v[k] = s.samples[last].v_p;
      p.d[k] = p.d[k - 1] + p.v[k - 1] * dt;
      p.a[k] = 0.0;
    }
  }
  return p;
}

struct NoiseConfig {
  double sigma = 0.0;  // m/s^2, acceleration noise std
  double mu = 0.0;     // m/s^2, acceleration noise mean
  double P_s = 0.0;    // s, full width of the phase-shift range
  std::uint64_t seed = 1;
  bool gaussian_first = false;  // default order: shift, then Gaussian

  [[nodiscard]] bool active() const { return sigma > 0.0 || mu != 0.0 || P_s > 0.0; }

  void validate() const {
    if (!(sigma >= 0.0)) throw std::invalid_argument("noise: sigma must be >= 0");
    if (!(P_s >= 0.0)) throw std::invalid_argument("noise: P_s must be >= 0");
    if (!std::isfinite(mu)) throw std::invalid_argument("noise: mu must be finite");
  }
};

/// Adds i.i.d. N(mu, sigma^2) to the predicted acceleration and re-integrates
/// speed from v(0) and position from d(0). Speed is clamped at zero inside
/// the recursion unless `clamp_at_zero` is false.
[[nodiscard]] inline PrecedingPrediction inject_gaussian_accel_noise(const PrecedingPrediction& pred,
                                                                     double sigma, double mu,
                                                                     std::mt19937_64& rng,
                                                                     bool clamp_at_zero = true) {
  PrecedingPrediction out = pred;
  if (sigma == 0.0 && mu == 0.0) return out;
  std::normal_distribution<double> noise(mu, sigma);
  for (std::size_t k = 0; k + 1 < pred.v.size(); ++k) {
    const double a = pred.a[k] + (sigma > 0.0 ? noise(rng) : mu);
    out.v[k + 1] = out.v[k] + a * pred.dt;
    if (clamp_at_zero) out.v[k + 1] = std::max(0.0, out.v[k + 1]);
  }
  out.reintegrate();
  return out;
}

[[nodiscard]] inline PrecedingPrediction inject_gaussian_accel_noise(const PrecedingPrediction& pred,
                                                                     double sigma, double mu,
                                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return inject_gaussian_accel_noise(pred, sigma, mu, rng);
}

/// Time-shifts the speed profile by N_s steps, padding with the edge value,
/// and re-integrates position from d(0).
[[nodiscard]] inline PrecedingPrediction inject_phase_shift(const PrecedingPrediction& pred, int N_s) {
  const auto N = static_cast<long>(pred.steps());
  if (std::abs(static_cast<long>(N_s)) >= N && N_s != 0)
    throw std::invalid_argument("inject_phase_shift: |N_s| must be smaller than the horizon");
  PrecedingPrediction out = pred;
  if (N_s == 0) return out;
  for (long k = 0; k <= N; ++k)
    out.v[static_cast<std::size_t>(k)] = pred.v[static_cast<std::size_t>(std::clamp(k + N_s, 0L, N))];
  out.reintegrate();
  return out;
}

/// Uniform integer shift over [-P_s / (2 dt), P_s / (2 dt)].
[[nodiscard]] inline int sample_shift(const NoiseConfig& cfg, double dt, std::mt19937_64& rng) {
  const auto half = static_cast<int>(std::floor(cfg.P_s / (2.0 * dt) + 1e-9));
  if (half == 0) return 0;
  return std::uniform_int_distribution<int>(-half, half)(rng);
}

/// Applies both perturbations in the configured order; returns the shift used.
inline int apply_prediction_noise(PrecedingPrediction& pred, const NoiseConfig& cfg, std::mt19937_64& rng) {
  const int shift = sample_shift(cfg, pred.dt, rng);
  if (cfg.gaussian_first) {
    pred = inject_gaussian_accel_noise(pred, cfg.sigma, cfg.mu, rng);
    pred = inject_phase_shift(pred, shift);
  } else {
    pred = inject_phase_shift(pred, shift);
    pred = inject_gaussian_accel_noise(pred, cfg.sigma, cfg.mu, rng);
  }
  return shift;
}

}  // namespace ecodrive
