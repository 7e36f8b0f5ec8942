#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "ecodrive/nlp.hpp"

namespace ecodrive {

enum class SolveStatus { Optimal, MaxIter, TimeBudget, Infeasible, Stalled };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::TimeBudget: return "TimeBudget";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Stalled: return "Stalled";
  }
  return "?";
}

enum class HessianMode { Auto, Exact, Bfgs };

struct SolverOptions {
  int max_iter = 300;
  double kkt_tol = 1e-6;
  double constraint_tol = 1e-6;
  double time_budget = kInf;  // seconds of wall time

  double mu_init = 0.1;
  double mu_min_factor = 0.1;   // final mu = kkt_tol * mu_min_factor
  double kappa_eps = 10.0;      // barrier subproblem tolerance, relative to mu
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double tau_min = 0.99;        // fraction-to-boundary

  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double bound_relax = 1e-8;

  // Inertia correction on the primal block. The static terms keep the
  // factorisation quasi-definite and are removed again by refinement.
  double reg_min = 1e-20;
  double reg_first = 1e-4;
  double reg_max = 1e40;
  double reg_static = 1e-8;
  double reg_dual = 1e-8;
  int max_refinement = 10;
  double refinement_tol = 1e-12;

  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
  bool second_order_correction = true;
  int max_regularized_retries = 6;

  HessianMode hessian = HessianMode::Auto;
  bool record_trace = false;

  void validate() const {
    if (!(kkt_tol > 0.0 && constraint_tol > 0.0))
      throw std::invalid_argument("SolverOptions: tolerances must be positive");
    if (!(mu_init > 0.0)) throw std::invalid_argument("SolverOptions: mu_init must be positive");
    if (!(reg_min > 0.0 && reg_dual >= 0.0))
      throw std::invalid_argument("SolverOptions: regularisation must be positive");
    if (max_iter < 0) throw std::invalid_argument("SolverOptions: max_iter must be >= 0");
  }
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double infeasibility = 0.0;  // ||c||_inf before the step
  double step_norm = 0.0;      // ||alpha * dx||_inf
  double mu = 0.0;
  double penalty = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double alpha = 0.0;
  double regularization = 0.0;
  bool accepted = false;
  bool corrected = false;  // accepted via second-order correction
};

struct Solution {
  VectorXd x;
  Multipliers mult;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double wall_time = 0.0;
  double kkt = kInf;
  double objective = kInf;
  double constraint_violation = kInf;
  std::optional<VectorXd> best_feasible;
  std::vector<IterationRecord> trace;

  [[nodiscard]] bool optimal() const { return status == SolveStatus::Optimal; }
};

inline void write_trace_csv(const std::vector<IterationRecord>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(12);
  out << "iter,objective,infeasibility,step_norm,mu,penalty,merit_before,merit_after,alpha,"
         "regularization,accepted,corrected\n";
  for (const auto& r : trace)
    out << r.iter << ',' << r.objective << ',' << r.infeasibility << ',' << r.step_norm << ','
        << r.mu << ',' << r.penalty << ',' << r.merit_before << ',' << r.merit_after << ','
        << r.alpha << ',' << r.regularization << ',' << r.accepted << ',' << r.corrected << '\n';
}

namespace detail {

/// Primal-dual barrier method with an l1 merit line search. Inequalities
/// g_l <= g(x) <= g_u get slacks s; the Newton system is reduced to
///
///   [ W + Sigma_x + dw I     J^T   ] [dx]   [ -(grad phi_x + J^T y)        ]
///   [ J                     -D     ] [dy] = [ -c - (slack terms on I rows) ]
///
/// and factored by a sparse LDL^T whose inertia drives the primal
/// regularisation dw.
class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& nlp, const SolverOptions& opts) : nlp_(nlp), opt_(opts) {}

  Solution run(const VectorXd& x_start, const Multipliers* warm) {
    const auto t_start = std::chrono::steady_clock::now();
    setup();
    initialize(x_start, warm);
    Solution sol;
    int iter = 0;
    int consecutive_failures = 0;
    for (;; ++iter) {
      const double e0 = optimality_error(0.0);
      const double viol = true_violation();
      if (viol <= opt_.constraint_tol) sol.best_feasible = x_;
      if (e0 <= opt_.kkt_tol && viol <= opt_.constraint_tol) {
        Multipliers mult = multipliers();
        const double k = kkt_residual(nlp_, x_, mult).value();
        if (k <= opt_.kkt_tol) {
          sol.status = SolveStatus::Optimal;
          break;
        }
      }
      if (iter >= opt_.max_iter) {
        sol.status = SolveStatus::MaxIter;
        break;
      }
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      if (elapsed > opt_.time_budget) {
        sol.status = SolveStatus::TimeBudget;
        break;
      }
      update_barrier();
      IterationRecord rec;
      rec.iter = iter;
      rec.objective = f_;
      rec.infeasibility = infeasibility_inf();
      rec.mu = mu_;
      const bool ok = step(rec, consecutive_failures > 0);
      if (opt_.record_trace) sol.trace.push_back(rec);
      if (ok) {
        consecutive_failures = 0;
      } else if (++consecutive_failures > opt_.max_regularized_retries) {
        sol.status = true_violation() > opt_.constraint_tol ? SolveStatus::Infeasible
                                                             : SolveStatus::Stalled;
        break;
      }
    }
    sol.x = x_;
    sol.mult = multipliers();
    sol.iterations = iter;
    sol.objective = f_;
    sol.constraint_violation = true_violation();
    sol.kkt = kkt_residual(nlp_, x_, sol.mult).value();
    sol.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  }

 private:
  // ---------------------------------------------------------------- setup
  void setup() {
    n_ = nlp_.num_variables();
    m_ = nlp_.num_constraints();
    nlp_.bounds(xl0_, xu0_, gl0_, gu0_);
    // Relaxation stays well inside the feasibility tolerance, so a converged
    // point is feasible on the original bounds too.
    const auto relax = [this](double b) {
      return std::min(opt_.bound_relax * std::max(1.0, std::abs(b)), 0.1 * opt_.constraint_tol);
    };
    xl_ = xl0_;
    xu_ = xu0_;
    has_xl_.assign(static_cast<std::size_t>(n_), false);
    has_xu_.assign(static_cast<std::size_t>(n_), false);
    for (Index i = 0; i < n_; ++i) {
      has_xl_[idx(i)] = finite_bound(xl_[i]);
      has_xu_[idx(i)] = finite_bound(xu_[i]);
      if (has_xl_[idx(i)]) xl_[i] -= relax(xl_[i]);
      if (has_xu_[idx(i)]) xu_[i] += relax(xu_[i]);
      if (has_xl_[idx(i)] && has_xu_[idx(i)] && !(xu0_[i] >= xl0_[i]))
        throw std::invalid_argument("NLP variable bounds are inconsistent");
    }
    slack_of_row_.assign(static_cast<std::size_t>(m_), -1);
    ineq_rows_.clear();
    eq_rows_.clear();
    for (Index r = 0; r < m_; ++r) {
      if (gl0_[r] == gu0_[r]) {
        eq_rows_.push_back(r);
      } else {
        if (!(gu0_[r] > gl0_[r])) throw std::invalid_argument("NLP constraint bounds are inconsistent");
        slack_of_row_[idx(r)] = static_cast<Index>(ineq_rows_.size());
        ineq_rows_.push_back(r);
      }
    }
    mi_ = static_cast<Index>(ineq_rows_.size());
    sl_.resize(mi_);
    su_.resize(mi_);
    has_sl_.assign(static_cast<std::size_t>(mi_), false);
    has_su_.assign(static_cast<std::size_t>(mi_), false);
    for (Index j = 0; j < mi_; ++j) {
      const Index r = ineq_rows_[idx(j)];
      sl_[j] = gl0_[r];
      su_[j] = gu0_[r];
      has_sl_[idx(j)] = finite_bound(sl_[j]);
      has_su_[idx(j)] = finite_bound(su_[j]);
      if (!has_sl_[idx(j)] && !has_su_[idx(j)])
        throw std::invalid_argument("NLP inequality row without any finite bound");
      if (has_sl_[idx(j)]) sl_[j] -= relax(sl_[j]);
      if (has_su_[idx(j)]) su_[j] += relax(su_[j]);
    }

    const auto jstruct = nlp_.jacobian_structure();
    jac_ = PatternMatrix(m_, n_, jstruct);
    jvals_.assign(jstruct.size(), 0.0);

    use_exact_ = opt_.hessian == HessianMode::Exact ||
                 (opt_.hessian == HessianMode::Auto && nlp_.has_hessian());
    if (use_exact_ && !nlp_.has_hessian())
      throw std::invalid_argument("exact Hessian requested but the NLP provides none");
    std::vector<Nonzero> hstruct;
    if (use_exact_) {
      hstruct = nlp_.hessian_structure();
      for (auto& nz : hstruct)
        if (nz.row < nz.col) std::swap(nz.row, nz.col);
    } else {
      for (Index c = 0; c < n_; ++c)
        for (Index r = c; r < n_; ++r) hstruct.push_back({r, c});
      bfgs_ = Eigen::MatrixXd::Identity(n_, n_);
    }
    hess_ = PatternMatrix(n_, n_, hstruct);
    hvals_.assign(hstruct.size(), 0.0);

    // KKT lower triangle: Hessian, full diagonal, then the Jacobian block.
    std::vector<Nonzero> kstruct = hstruct;
    kstruct.reserve(hstruct.size() + static_cast<std::size_t>(n_ + m_) + jstruct.size());
    for (Index i = 0; i < n_ + m_; ++i) kstruct.push_back({i, i});
    for (const auto& nz : jstruct) kstruct.push_back({n_ + nz.row, nz.col});
    kkt_ = PatternMatrix(n_ + m_, n_ + m_, kstruct);
    kvals_.assign(kstruct.size(), 0.0);
    ldlt_.analyzePattern(kkt_.matrix());

    grad_.resize(n_);
    g_.resize(m_);
  }

  static bool finite_bound(double b) { return detail::finite_bound(b); }
  static std::size_t idx(Index i) { return static_cast<std::size_t>(i); }

  void initialize(const VectorXd& x_start, const Multipliers* warm) {
    if (x_start.size() != n_) throw std::invalid_argument("initial point has wrong dimension");
    x_ = x_start;
    for (Index i = 0; i < n_; ++i) x_[i] = push_inside(x_[i], xl_[i], xu_[i], has_xl_[idx(i)], has_xu_[idx(i)]);
    evaluate_functions(x_, f_, g_);
    evaluate_derivatives();
    s_.resize(mi_);
    for (Index j = 0; j < mi_; ++j)
      s_[j] = push_inside(g_[ineq_rows_[idx(j)]], sl_[j], su_[j], has_sl_[idx(j)], has_su_[idx(j)]);

    mu_ = opt_.mu_init;
    nu_ = 0.0;
    y_ = VectorXd::Zero(m_);
    zl_ = VectorXd::Zero(n_);
    zu_ = VectorXd::Zero(n_);
    vl_ = VectorXd::Zero(mi_);
    vu_ = VectorXd::Zero(mi_);
    if (warm && warm->y.size() == m_ && warm->z_l.size() == n_ && warm->z_u.size() == n_) {
      y_ = warm->y;
      for (Index i = 0; i < n_; ++i) {
        if (has_xl_[idx(i)]) zl_[i] = std::max(warm->z_l[i], mu_ / (x_[i] - xl_[i]));
        if (has_xu_[idx(i)]) zu_[i] = std::max(warm->z_u[i], mu_ / (xu_[i] - x_[i]));
      }
      for (Index j = 0; j < mi_; ++j) {
        const double yi = y_[ineq_rows_[idx(j)]];
        if (has_sl_[idx(j)]) vl_[j] = std::max(-yi, mu_ / (s_[j] - sl_[j]));
        if (has_su_[idx(j)]) vu_[j] = std::max(yi, mu_ / (su_[j] - s_[j]));
      }
    } else {
      for (Index i = 0; i < n_; ++i) {
        if (has_xl_[idx(i)]) zl_[i] = 1.0;
        if (has_xu_[idx(i)]) zu_[i] = 1.0;
      }
      for (Index j = 0; j < mi_; ++j) {
        if (has_sl_[idx(j)]) vl_[j] = 1.0;
        if (has_su_[idx(j)]) vu_[j] = 1.0;
      }
    }
    dw_last_ = 0.0;
  }

  double push_inside(double v, double lo, double hi, bool has_lo, bool has_hi) const {
    if (has_lo && has_hi) {
      const double pl = std::min(opt_.bound_push * std::max(1.0, std::abs(lo)), opt_.bound_frac * (hi - lo));
      const double pu = std::min(opt_.bound_push * std::max(1.0, std::abs(hi)), opt_.bound_frac * (hi - lo));
      return std::clamp(v, lo + pl, hi - pu);
    }
    if (has_lo) return std::max(v, lo + opt_.bound_push * std::max(1.0, std::abs(lo)));
    if (has_hi) return std::min(v, hi - opt_.bound_push * std::max(1.0, std::abs(hi)));
    return v;
  }

  void evaluate_functions(const VectorXd& x, double& f, VectorXd& g) const {
    f = nlp_.objective(x);
    nlp_.constraints(x, g);
  }

  void evaluate_derivatives() {
    nlp_.gradient(x_, grad_);
    nlp_.jacobian_values(x_, jvals_);
    jac_.assign(jvals_);
  }

  // ------------------------------------------------------------ residuals
  /// Constraint residual c = [g_E - g_l; g_I - s] for given g and s.
  VectorXd residual(const VectorXd& g, const VectorXd& s) const {
    VectorXd c(m_);
    for (Index r = 0; r < m_; ++r) {
      const Index j = slack_of_row_[idx(r)];
      c[r] = j < 0 ? g[r] - gl0_[r] : g[r] - s[j];
    }
    return c;
  }

  double infeasibility_inf() const {
    const VectorXd c = residual(g_, s_);
    return c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;
  }

  double true_violation() const {
    double v = 0.0;
    for (Index r = 0; r < m_; ++r) {
      if (finite_bound(gl0_[r])) v = std::max(v, gl0_[r] - g_[r]);
      if (finite_bound(gu0_[r])) v = std::max(v, g_[r] - gu0_[r]);
    }
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) v = std::max(v, xl0_[i] - x_[i]);
      if (has_xu_[idx(i)]) v = std::max(v, x_[i] - xu0_[i]);
    }
    return v;
  }

  double optimality_error(double mu) const {
    const VectorXd rx = grad_ + jac_.matrix().transpose() * y_ - zl_ + zu_;
    double dual = rx.size() ? rx.lpNorm<Eigen::Infinity>() : 0.0;
    double compl_err = 0.0;
    double zsum = zl_.lpNorm<1>() + zu_.lpNorm<1>() + vl_.lpNorm<1>() + vu_.lpNorm<1>();
    Index nb = 0;
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) {
        compl_err = std::max(compl_err, std::abs((x_[i] - xl_[i]) * zl_[i] - mu));
        ++nb;
      }
      if (has_xu_[idx(i)]) {
        compl_err = std::max(compl_err, std::abs((xu_[i] - x_[i]) * zu_[i] - mu));
        ++nb;
      }
    }
    for (Index j = 0; j < mi_; ++j) {
      const double yi = y_[ineq_rows_[idx(j)]];
      dual = std::max(dual, std::abs(-yi - vl_[j] + vu_[j]));
      if (has_sl_[idx(j)]) {
        compl_err = std::max(compl_err, std::abs((s_[j] - sl_[j]) * vl_[j] - mu));
        ++nb;
      }
      if (has_su_[idx(j)]) {
        compl_err = std::max(compl_err, std::abs((su_[j] - s_[j]) * vu_[j] - mu));
        ++nb;
      }
    }
    constexpr double s_max = 100.0;
    const double sd =
        std::max(s_max, (y_.lpNorm<1>() + zsum) / static_cast<double>(std::max<Index>(1, m_ + 2 * n_))) /
        s_max;
    const double sc = std::max(s_max, zsum / static_cast<double>(std::max<Index>(1, nb))) / s_max;
    return std::max({dual / sd, infeasibility_inf(), compl_err / sc});
  }

  void update_barrier() {
    const double mu_floor = opt_.kkt_tol * opt_.mu_min_factor;
    while (mu_ > mu_floor && optimality_error(mu_) <= opt_.kappa_eps * mu_) {
      const double next = std::max(mu_floor, std::min(opt_.kappa_mu * mu_, std::pow(mu_, opt_.theta_mu)));
      if (next >= mu_) break;
      mu_ = next;
    }
  }

  Multipliers multipliers() const {
    Multipliers m{y_, zl_, zu_};
    for (Index i = 0; i < n_; ++i) {
      if (!has_xl_[idx(i)]) m.z_l[i] = 0.0;
      if (!has_xu_[idx(i)]) m.z_u[i] = 0.0;
    }
    return m;
  }

  // --------------------------------------------------------------- merit
  double barrier_objective(double f, const VectorXd& x, const VectorXd& s) const {
    double phi = f;
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) phi -= mu_ * std::log(x[i] - xl_[i]);
      if (has_xu_[idx(i)]) phi -= mu_ * std::log(xu_[i] - x[i]);
    }
    for (Index j = 0; j < mi_; ++j) {
      if (has_sl_[idx(j)]) phi -= mu_ * std::log(s[j] - sl_[j]);
      if (has_su_[idx(j)]) phi -= mu_ * std::log(su_[j] - s[j]);
    }
    return phi;
  }

  double merit(double f, const VectorXd& x, const VectorXd& g, const VectorXd& s) const {
    return barrier_objective(f, x, s) + nu_ * residual(g, s).lpNorm<1>();
  }

  // ----------------------------------------------------------- the step
  struct Direction {
    VectorXd dx, ds, dy;
  };

  bool factorize(double dw) {
    std::size_t k = 0;
    for (double h : hvals_) kvals_[k++] = h;
    for (Index i = 0; i < n_; ++i) kvals_[k++] = sigma_x_[i] + dw + opt_.reg_static;
    for (Index r = 0; r < m_; ++r) {
      const Index j = slack_of_row_[idx(r)];
      kvals_[k++] = j < 0 ? -opt_.reg_dual : -(1.0 / (sigma_s_[j] + dw) + opt_.reg_dual);
    }
    for (double v : jvals_) kvals_[k++] = v;
    kkt_.assign(kvals_);
    ldlt_.factorize(kkt_.matrix());
    if (ldlt_.info() != Eigen::Success) return false;
    const VectorXd& d = ldlt_.vectorD();
    Index pos = 0, neg = 0;
    for (Index i = 0; i < d.size(); ++i) {
      if (d[i] > 0.0) ++pos;
      else if (d[i] < 0.0) ++neg;
      if (!std::isfinite(d[i])) return false;
    }
    return pos == n_ && neg == m_;
  }

  /// Factor with the smallest primal regularisation that gives inertia (n, m, 0).
  bool factorize_with_inertia_correction(bool force_regularization) {
    double dw = 0.0;
    if (force_regularization) dw = std::max(opt_.reg_first, dw_last_ * 10.0);
    for (;;) {
      if (factorize(dw)) break;
      if (dw == 0.0)
        dw = dw_last_ == 0.0 ? opt_.reg_first : std::max(opt_.reg_min, dw_last_ / 3.0);
      else
        dw *= dw_last_ == 0.0 ? 100.0 : 8.0;
      if (dw > opt_.reg_max) return false;
    }
    dw_ = dw;
    if (dw > 0.0) dw_last_ = dw;
    return true;
  }

  /// K * v without the static regularisation (the system refinement aims at).
  VectorXd apply_unregularized(const VectorXd& v) const {
    VectorXd out = kkt_.matrix().selfadjointView<Eigen::Lower>() * v;
    out.head(n_) -= opt_.reg_static * v.head(n_);
    out.tail(m_) += opt_.reg_dual * v.tail(m_);
    return out;
  }

  VectorXd solve_kkt(const VectorXd& rhs) const {
    VectorXd sol = ldlt_.solve(rhs);
    const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
    VectorXd best = sol;
    double best_r = kInf;
    for (int k = 0; k <= opt_.max_refinement; ++k) {
      const VectorXd res = rhs - apply_unregularized(sol);
      const double r = res.lpNorm<Eigen::Infinity>();
      if (!(r < best_r)) break;
      best = sol;
      best_r = r;
      if (r <= opt_.refinement_tol * scale || k == opt_.max_refinement) break;
      sol += ldlt_.solve(res);
    }
    return best;
  }

  /// Newton direction for the given constraint residual (the regular step
  /// uses c(x, s); the second-order correction substitutes its own).
  Direction direction(const VectorXd& c) const {
    VectorXd rhs(n_ + m_);
    rhs.head(n_) = -(grad_phi_x_ + jac_.matrix().transpose() * y_);
    for (Index r = 0; r < m_; ++r) {
      const Index j = slack_of_row_[idx(r)];
      rhs[n_ + r] = j < 0 ? -c[r] : -c[r] - rs_[j] / (sigma_s_[j] + dw_);
    }
    const VectorXd sol = solve_kkt(rhs);
    Direction d;
    d.dx = sol.head(n_);
    d.dy = sol.tail(m_);
    d.ds.resize(mi_);
    for (Index j = 0; j < mi_; ++j) d.ds[j] = (d.dy[ineq_rows_[idx(j)]] - rs_[j]) / (sigma_s_[j] + dw_);
    return d;
  }

  double max_step(const VectorXd& x, const VectorXd& dx, const VectorXd& lo, const VectorXd& hi,
                  const std::vector<bool>& has_lo, const std::vector<bool>& has_hi, double tau) const {
    double alpha = 1.0;
    for (Index i = 0; i < x.size(); ++i) {
      if (has_lo[idx(i)] && dx[i] < 0.0) alpha = std::min(alpha, -tau * (x[i] - lo[i]) / dx[i]);
      if (has_hi[idx(i)] && dx[i] > 0.0) alpha = std::min(alpha, tau * (hi[i] - x[i]) / dx[i]);
    }
    return alpha;
  }

  static double max_dual_step(const VectorXd& z, const VectorXd& dz, const std::vector<bool>& has,
                              double tau) {
    double alpha = 1.0;
    for (Index i = 0; i < z.size(); ++i)
      if (has[idx(i)] && dz[i] < 0.0) alpha = std::min(alpha, -tau * z[i] / dz[i]);
    return alpha;
  }

  double primal_step_bound(const Direction& d, double tau) const {
    const VectorXd none;
    return std::min(max_step(x_, d.dx, xl_, xu_, has_xl_, has_xu_, tau),
                    max_step(s_, d.ds, sl_, su_, has_sl_, has_su_, tau));
  }

  void prepare_step_data() {
    sigma_x_ = VectorXd::Zero(n_);
    grad_phi_x_ = grad_;
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) {
        const double d = x_[i] - xl_[i];
        sigma_x_[i] += zl_[i] / d;
        grad_phi_x_[i] -= mu_ / d;
      }
      if (has_xu_[idx(i)]) {
        const double d = xu_[i] - x_[i];
        sigma_x_[i] += zu_[i] / d;
        grad_phi_x_[i] += mu_ / d;
      }
    }
    sigma_s_ = VectorXd::Zero(mi_);
    grad_phi_s_ = VectorXd::Zero(mi_);
    rs_.resize(mi_);
    for (Index j = 0; j < mi_; ++j) {
      if (has_sl_[idx(j)]) {
        const double d = s_[j] - sl_[j];
        sigma_s_[j] += vl_[j] / d;
        grad_phi_s_[j] -= mu_ / d;
      }
      if (has_su_[idx(j)]) {
        const double d = su_[j] - s_[j];
        sigma_s_[j] += vu_[j] / d;
        grad_phi_s_[j] += mu_ / d;
      }
      rs_[j] = grad_phi_s_[j] - y_[ineq_rows_[idx(j)]];
    }
    if (use_exact_) {
      nlp_.hessian_values(x_, 1.0, y_, hvals_);
    } else {
      std::size_t k = 0;
      for (Index c = 0; c < n_; ++c)
        for (Index r = c; r < n_; ++r) hvals_[k++] = bfgs_(r, c);
    }
    hess_.assign(hvals_);
  }

  bool step(IterationRecord& rec, bool force_regularization) {
    prepare_step_data();
    if (!factorize_with_inertia_correction(force_regularization)) return false;
    rec.regularization = dw_;

    const VectorXd c0 = residual(g_, s_);
    const Direction d = direction(c0);
    const double tau = std::max(opt_.tau_min, 1.0 - mu_);
    const double alpha_max = primal_step_bound(d, tau);

    // Penalty update so that d is a descent direction of the merit.
    const VectorXd Jdx = jac_.matrix() * d.dx;
    VectorXd c_lin = c0 + Jdx;
    for (Index j = 0; j < mi_; ++j) c_lin[ineq_rows_[idx(j)]] -= d.ds[j];
    const double c_norm = c0.lpNorm<1>();
    const double decrease = c_norm - c_lin.lpNorm<1>();
    const double grad_dir = grad_phi_x_.dot(d.dx) + grad_phi_s_.dot(d.ds);
    const VectorXd Hdx = hess_.matrix().selfadjointView<Eigen::Lower>() * d.dx;
    double curv = d.dx.dot(Hdx) + (sigma_x_.array() + dw_).matrix().dot(d.dx.cwiseAbs2()) +
                  (sigma_s_.array() + dw_).matrix().dot(d.ds.cwiseAbs2());
    constexpr double rho = 0.1;
    if (decrease > 0.0) {
      const double nu_needed = (grad_dir + std::max(0.0, 0.5 * curv)) / ((1.0 - rho) * decrease);
      if (nu_ < nu_needed) nu_ = 1.1 * nu_needed;
    }
    const double dir_deriv = grad_dir - nu_ * decrease;

    const double phi0 = merit(f_, x_, g_, s_);
    rec.penalty = nu_;
    rec.merit_before = phi0;

    const double tiny = 10.0 * std::numeric_limits<double>::epsilon() * (1.0 + x_.lpNorm<Eigen::Infinity>());
    const bool tiny_step = d.dx.lpNorm<Eigen::Infinity>() <= tiny &&
                           (mi_ == 0 || d.ds.lpNorm<Eigen::Infinity>() <= tiny);

    VectorXd x_t(n_), s_t(mi_), g_t(m_);
    double f_t = 0.0;
    double alpha = alpha_max;
    bool accepted = false;
    const double slop = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(phi0));
    Direction used = d;
    double alpha_used = alpha;
    for (int k = 0; k <= opt_.max_backtracks; ++k) {
      x_t = x_ + alpha * d.dx;
      s_t = s_ + alpha * d.ds;
      evaluate_functions(x_t, f_t, g_t);
      const double phi_t = std::isfinite(f_t) && g_t.allFinite() ? merit(f_t, x_t, g_t, s_t) : kInf;
      if (tiny_step || phi_t <= phi0 + opt_.armijo * alpha * dir_deriv + slop) {
        accepted = true;
        rec.merit_after = phi_t;
        alpha_used = alpha;
        break;
      }
      if (k == 0 && opt_.second_order_correction && std::isfinite(phi_t) &&
          residual(g_t, s_t).lpNorm<1>() >= c_norm) {
        // Second-order correction: re-aim the constraint linearisation.
        const VectorXd c_soc = alpha * c0 + residual(g_t, s_t);
        const Direction dc = direction(c_soc);
        const double a_soc = primal_step_bound(dc, tau);
        VectorXd xs = x_ + a_soc * dc.dx, ss = s_ + a_soc * dc.ds, gs(m_);
        double fs = 0.0;
        evaluate_functions(xs, fs, gs);
        const double phi_s = std::isfinite(fs) && gs.allFinite() ? merit(fs, xs, gs, ss) : kInf;
        if (phi_s <= phi0 + opt_.armijo * alpha * dir_deriv + slop) {
          x_t = xs;
          s_t = ss;
          g_t = gs;
          f_t = fs;
          accepted = true;
          rec.corrected = true;
          rec.merit_after = phi_s;
          used = dc;
          alpha_used = a_soc;
          break;
        }
      }
      alpha *= opt_.backtrack;
    }
    if (!accepted) return false;

    rec.accepted = true;
    rec.alpha = alpha_used;
    rec.step_norm = alpha_used * used.dx.lpNorm<Eigen::Infinity>();

    // Dual directions from the primal step actually taken.
    VectorXd dzl = VectorXd::Zero(n_), dzu = VectorXd::Zero(n_);
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) {
        const double dist = x_[i] - xl_[i];
        dzl[i] = mu_ / dist - zl_[i] - zl_[i] / dist * used.dx[i];
      }
      if (has_xu_[idx(i)]) {
        const double dist = xu_[i] - x_[i];
        dzu[i] = mu_ / dist - zu_[i] + zu_[i] / dist * used.dx[i];
      }
    }
    VectorXd dvl = VectorXd::Zero(mi_), dvu = VectorXd::Zero(mi_);
    for (Index j = 0; j < mi_; ++j) {
      if (has_sl_[idx(j)]) {
        const double dist = s_[j] - sl_[j];
        dvl[j] = mu_ / dist - vl_[j] - vl_[j] / dist * used.ds[j];
      }
      if (has_su_[idx(j)]) {
        const double dist = su_[j] - s_[j];
        dvu[j] = mu_ / dist - vu_[j] + vu_[j] / dist * used.ds[j];
      }
    }
    const double alpha_z = std::min({max_dual_step(zl_, dzl, has_xl_, tau),
                                     max_dual_step(zu_, dzu, has_xu_, tau),
                                     max_dual_step(vl_, dvl, has_sl_, tau),
                                     max_dual_step(vu_, dvu, has_su_, tau)});

    const VectorXd x_prev = x_;
    const VectorXd grad_lag_prev_y_next =
        use_exact_ ? VectorXd() : VectorXd(grad_ + jac_.matrix().transpose() * (y_ + alpha_used * used.dy));

    x_ = x_t;
    s_ = s_t;
    g_ = g_t;
    f_ = f_t;
    y_ += alpha_used * used.dy;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
    vl_ += alpha_z * dvl;
    vu_ += alpha_z * dvu;
    evaluate_derivatives();
    safeguard_bound_multipliers();

    if (!use_exact_) {
      const VectorXd grad_lag = grad_ + jac_.matrix().transpose() * y_;
      bfgs_update(x_ - x_prev, grad_lag - grad_lag_prev_y_next);
    }
    return true;
  }

  void safeguard_bound_multipliers() {
    constexpr double kappa = 1e10;
    for (Index i = 0; i < n_; ++i) {
      if (has_xl_[idx(i)]) {
        const double d = x_[i] - xl_[i];
        zl_[i] = std::clamp(zl_[i], mu_ / (kappa * d), kappa * mu_ / d);
      }
      if (has_xu_[idx(i)]) {
        const double d = xu_[i] - x_[i];
        zu_[i] = std::clamp(zu_[i], mu_ / (kappa * d), kappa * mu_ / d);
      }
    }
    for (Index j = 0; j < mi_; ++j) {
      if (has_sl_[idx(j)]) {
        const double d = s_[j] - sl_[j];
        vl_[j] = std::clamp(vl_[j], mu_ / (kappa * d), kappa * mu_ / d);
      }
      if (has_su_[idx(j)]) {
        const double d = su_[j] - s_[j];
        vu_[j] = std::clamp(vu_[j], mu_ / (kappa * d), kappa * mu_ / d);
      }
    }
  }

  /// Powell-damped BFGS update of the Lagrangian Hessian approximation.
  void bfgs_update(const VectorXd& sk, const VectorXd& yk_raw) {
    const double ss = sk.squaredNorm();
    if (ss <= 1e-30) return;
    const VectorXd Bs = bfgs_ * sk;
    const double sBs = sk.dot(Bs);
    if (sBs <= 0.0) return;
    const double sy = sk.dot(yk_raw);
    const double theta = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
    const VectorXd yk = theta * yk_raw + (1.0 - theta) * Bs;
    const double sy_d = sk.dot(yk);
    if (sy_d <= 1e-16 * ss) return;
    bfgs_ += yk * yk.transpose() / sy_d - Bs * Bs.transpose() / sBs;
  }

  const NlpProblem& nlp_;
  SolverOptions opt_;
  Index n_ = 0, m_ = 0, mi_ = 0;
  VectorXd xl0_, xu0_, gl0_, gu0_;
  VectorXd xl_, xu_, sl_, su_;
  std::vector<bool> has_xl_, has_xu_, has_sl_, has_su_;
  std::vector<Index> slack_of_row_, ineq_rows_, eq_rows_;

  PatternMatrix jac_, hess_, kkt_;
  std::vector<double> jvals_, hvals_, kvals_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool use_exact_ = true;
  Eigen::MatrixXd bfgs_;

  VectorXd x_, s_, y_, zl_, zu_, vl_, vu_;
  VectorXd grad_, g_;
  double f_ = 0.0;
  double mu_ = 0.1;
  double nu_ = 0.0;
  double dw_ = 0.0, dw_last_ = 0.0;
  VectorXd sigma_x_, sigma_s_, grad_phi_x_, grad_phi_s_, rs_;
};

}  // namespace detail

/// Solves the NLP from z0. Deterministic for identical inputs when no time
/// budget interrupts the run. Failures are reported through the status.
[[nodiscard]] inline Solution solve(const NlpProblem& problem, const VectorXd& z0,
                                    const SolverOptions& opts = {},
                                    const Multipliers* warm = nullptr) {
  opts.validate();
  detail::InteriorPoint ip(problem, opts);
  return ip.run(z0, warm);
}

}  // namespace ecodrive
