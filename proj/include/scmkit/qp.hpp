#pragma once

#include <Eigen/Dense>

namespace scmkit {

/// Donor weights on the probability simplex (w >= 0, sum w = 1).
struct SimplexWeights {
  Eigen::VectorXd values;

  double sum() const { return values.sum(); }
  double min() const { return values.minCoeff(); }
  bool feasible(double sum_tol = 1e-9, double neg_tol = 1e-12) const {
    return std::abs(sum() - 1.0) <= sum_tol && min() >= -neg_tol;
  }
};

struct QpOptions {
  double tol = 1e-8;        // KKT residual tolerance (scale-normalized)
  int max_iterations = 500;
};

struct QpSolution {
  SimplexWeights weights;
  double objective = 0.0;      // squared V-weighted distance at the solution
  double kkt_residual = 0.0;   // max of feasibility and complementarity gap
  int iterations = 0;
  bool converged = false;
  bool non_unique_hint = false;  // reduced Hessian singular on the active face
};

/**
 * Minimizes (x1 - X0 w)' diag(v) (x1 - X0 w) over the probability simplex
 * via a primal-dual interior point method (Mehrotra predictor-corrector)
 * followed by an equality-constrained least-squares polish on the active
 * support. Deterministic: fixed starting point, no randomized pivoting.
 *
 * x1: k-vector of treated predictor values; x0: k x J donor matrix;
 * v: k nonnegative predictor weights (at least one positive).
 */
QpSolution solve_simplex_wls(const Eigen::VectorXd& x1,
                             const Eigen::MatrixXd& x0,
                             const Eigen::VectorXd& v,
                             const QpOptions& options = QpOptions{});

}  // namespace scmkit
