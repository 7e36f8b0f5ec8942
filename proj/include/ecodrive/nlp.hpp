#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace ecodrive {

using Eigen::Index;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Bounds at or beyond this magnitude are treated as absent.
inline constexpr double kBoundInf = 1e19;

struct Nonzero {
  Index row = 0;
  Index col = 0;
};

/// Smooth nonlinear program
///
///   min f(x)  s.t.  g_l <= g(x) <= g_u,  x_l <= x <= x_u.
///
/// Rows with g_l == g_u are equalities. Derivatives are supplied in
/// coordinate form over a fixed sparsity pattern. The Hessian of the
/// Lagrangian  obj_factor * f + lambda^T g  is given as its lower triangle
/// (row >= col); duplicate entries are summed.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  [[nodiscard]] virtual Index num_variables() const = 0;
  [[nodiscard]] virtual Index num_constraints() const = 0;
  virtual void bounds(VectorXd& x_l, VectorXd& x_u, VectorXd& g_l, VectorXd& g_u) const = 0;

  [[nodiscard]] virtual double objective(const VectorXd& x) const = 0;
  virtual void gradient(const VectorXd& x, VectorXd& grad) const = 0;
  virtual void constraints(const VectorXd& x, VectorXd& g) const = 0;

  [[nodiscard]] virtual std::vector<Nonzero> jacobian_structure() const = 0;
  virtual void jacobian_values(const VectorXd& x, std::span<double> values) const = 0;

  [[nodiscard]] virtual bool has_hessian() const { return false; }
  [[nodiscard]] virtual std::vector<Nonzero> hessian_structure() const { return {}; }
  virtual void hessian_values(const VectorXd& /*x*/, double /*obj_factor*/,
                              const VectorXd& /*lambda*/, std::span<double> /*values*/) const {}
};

/// Sparse matrix with a fixed pattern that is refilled from coordinate
/// values in the order of the structure it was built from.
class PatternMatrix {
 public:
  PatternMatrix() = default;
  PatternMatrix(Index rows, Index cols, const std::vector<Nonzero>& structure) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(structure.size());
    for (const auto& nz : structure) trip.emplace_back(nz.row, nz.col, 1.0);
    mat_.resize(rows, cols);
    mat_.setFromTriplets(trip.begin(), trip.end());
    mat_.makeCompressed();
    using StorageIndex = Eigen::SparseMatrix<double>::StorageIndex;
    slot_.resize(structure.size());
    for (std::size_t k = 0; k < structure.size(); ++k) {
      const Index col = structure[k].col;
      const StorageIndex* begin = mat_.innerIndexPtr() + mat_.outerIndexPtr()[col];
      const StorageIndex* end = mat_.innerIndexPtr() + mat_.outerIndexPtr()[col + 1];
      const StorageIndex* it =
          std::lower_bound(begin, end, static_cast<StorageIndex>(structure[k].row));
      slot_[k] = static_cast<Index>(it - mat_.innerIndexPtr());
    }
  }

  void assign(std::span<const double> values) {
    std::fill(mat_.valuePtr(), mat_.valuePtr() + mat_.nonZeros(), 0.0);
    for (std::size_t k = 0; k < slot_.size(); ++k) mat_.valuePtr()[slot_[k]] += values[k];
  }

  [[nodiscard]] const Eigen::SparseMatrix<double>& matrix() const { return mat_; }
  [[nodiscard]] Eigen::SparseMatrix<double>& matrix() { return mat_; }
  [[nodiscard]] std::size_t entries() const { return slot_.size(); }

 private:
  Eigen::SparseMatrix<double> mat_;
  std::vector<Index> slot_;
};

[[nodiscard]] inline Eigen::SparseMatrix<double> evaluate_jacobian(const NlpProblem& nlp,
                                                                   const VectorXd& x) {
  const auto structure = nlp.jacobian_structure();
  PatternMatrix J(nlp.num_constraints(), nlp.num_variables(), structure);
  std::vector<double> values(structure.size());
  nlp.jacobian_values(x, values);
  J.assign(values);
  return J.matrix();
}

/// Constraint multipliers (one per row of g) and bound multipliers.
/// Sign convention: the Lagrangian is f + y^T g - z_l^T (x - x_l) - z_u^T (x_u - x),
/// so a row resting on its lower bound carries y <= 0.
struct Multipliers {
  VectorXd y;
  VectorXd z_l;
  VectorXd z_u;
};

struct KktMeasures {
  double stationarity = 0.0;         // ||grad f + J^T y - z_l + z_u||_inf, unscaled
  double primal = 0.0;               // largest bound/equality violation of g and x
  double complementarity = 0.0;      // largest |multiplier * distance-to-bound|
  double dual_scale = 1.0;           // multiplier-size normalisation of stationarity
  double compl_scale = 1.0;
  [[nodiscard]] double value() const {
    return std::max({stationarity / dual_scale, primal, complementarity / compl_scale});
  }
};

namespace detail {

inline bool finite_bound(double b) { return std::abs(b) < kBoundInf; }

}  // namespace detail

/// Largest violation of the variable bounds and constraint bounds at x.
[[nodiscard]] inline double constraint_violation(const NlpProblem& nlp, const VectorXd& x) {
  VectorXd xl, xu, gl, gu, g(nlp.num_constraints());
  nlp.bounds(xl, xu, gl, gu);
  nlp.constraints(x, g);
  double v = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    if (detail::finite_bound(gl[i])) v = std::max(v, gl[i] - g[i]);
    if (detail::finite_bound(gu[i])) v = std::max(v, g[i] - gu[i]);
  }
  for (Index i = 0; i < x.size(); ++i) {
    if (detail::finite_bound(xl[i])) v = std::max(v, xl[i] - x[i]);
    if (detail::finite_bound(xu[i])) v = std::max(v, x[i] - xu[i]);
  }
  return v;
}

/// First-order optimality measure at (x, multipliers). Inequality rows get
/// their implied slack s = g(x); the stationarity normalisation follows the
/// usual interior-point convention (s_max = 100).
[[nodiscard]] inline KktMeasures kkt_residual(const NlpProblem& nlp, const VectorXd& x,
                                              const Multipliers& mult) {
  const Index n = nlp.num_variables();
  const Index m = nlp.num_constraints();
  VectorXd xl, xu, gl, gu, g(m), grad(n);
  nlp.bounds(xl, xu, gl, gu);
  nlp.constraints(x, g);
  nlp.gradient(x, grad);
  const auto J = evaluate_jacobian(nlp, x);

  KktMeasures k;
  VectorXd r = grad + J.transpose() * mult.y - mult.z_l + mult.z_u;
  k.stationarity = r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0;
  k.primal = constraint_violation(nlp, x);

  double compl_max = 0.0;
  double dual_sum = mult.y.lpNorm<1>() + mult.z_l.lpNorm<1>() + mult.z_u.lpNorm<1>();
  double bound_sum = mult.z_l.lpNorm<1>() + mult.z_u.lpNorm<1>();
  // Distances are clamped at zero: a point past a bound is already charged
  // in the primal term.
  const auto gap = [](double d) { return std::max(d, 0.0); };
  Index n_bound = 0;
  for (Index i = 0; i < n; ++i) {
    if (detail::finite_bound(xl[i])) {
      compl_max = std::max(compl_max, std::abs(mult.z_l[i] * gap(x[i] - xl[i])));
      ++n_bound;
    }
    if (detail::finite_bound(xu[i])) {
      compl_max = std::max(compl_max, std::abs(mult.z_u[i] * gap(xu[i] - x[i])));
      ++n_bound;
    }
    // Negative bound multipliers are dual infeasible.
    compl_max = std::max({compl_max, -mult.z_l[i], -mult.z_u[i]});
  }
  for (Index i = 0; i < m; ++i) {
    if (gl[i] == gu[i]) continue;
    const double v_l = std::max(-mult.y[i], 0.0);
    const double v_u = std::max(mult.y[i], 0.0);
    bound_sum += std::abs(mult.y[i]);
    ++n_bound;
    if (detail::finite_bound(gl[i])) compl_max = std::max(compl_max, v_l * gap(g[i] - gl[i]));
    else compl_max = std::max(compl_max, v_l);
    if (detail::finite_bound(gu[i])) compl_max = std::max(compl_max, v_u * gap(gu[i] - g[i]));
    else compl_max = std::max(compl_max, v_u);
  }
  k.complementarity = compl_max;
  constexpr double s_max = 100.0;
  const double dn = static_cast<double>(std::max<Index>(1, m + 2 * n));
  k.dual_scale = std::max(s_max, dual_sum / dn) / s_max;
  k.compl_scale = std::max(s_max, bound_sum / static_cast<double>(std::max<Index>(1, n_bound))) / s_max;
  return k;
}

}  // namespace ecodrive
