#include "scmkit/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scmkit/errors.hpp"

namespace scmkit {

namespace {

// Largest alpha in (0, 1] keeping x + alpha*dx >= (1 - tau) * x > 0.
double step_to_boundary(const Eigen::VectorXd& x, const Eigen::VectorXd& dx,
                        double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0.0) alpha = std::min(alpha, -tau * x(i) / dx(i));
  return alpha;
}

// Orthonormal basis of {d : sum(d) = 0} in R^m, m >= 2.
Eigen::MatrixXd simplex_tangent_basis(Eigen::Index m) {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(m, 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
  const Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(m - 1);
}

}  // namespace

QpSolution solve_simplex_wls(const Eigen::VectorXd& x1,
                             const Eigen::MatrixXd& x0,
                             const Eigen::VectorXd& v,
                             const QpOptions& options) {
  const Eigen::Index k = x1.size();
  const Eigen::Index j = x0.cols();
  if (k < 1 || j < 1 || x0.rows() != k || v.size() != k)
    throw FitError("solve_simplex_wls: inconsistent dimensions");
  if (!x1.allFinite() || !x0.allFinite() || !v.allFinite())
    throw FitError("solve_simplex_wls: non-finite input");
  if (v.minCoeff() < 0.0 || v.maxCoeff() <= 0.0)
    throw FitError("solve_simplex_wls: predictor weights must be nonnegative "
                   "with at least one positive entry");

  // Work in the sqrt(v)-scaled geometry: f(w) = ||b - B w||^2.
  const Eigen::VectorXd sv = v.cwiseSqrt();
  const Eigen::MatrixXd scaled_donors = sv.asDiagonal() * x0;
  const Eigen::VectorXd scaled_target = sv.cwiseProduct(x1);

  auto objective_of = [&](const Eigen::VectorXd& w) {
    return (scaled_target - scaled_donors * w).squaredNorm();
  };
  auto gradient_of = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    return 2.0 * scaled_donors.transpose() * (scaled_donors * w - scaled_target);
  };

  QpSolution sol;

  if (j == 1) {
    sol.weights.values = Eigen::VectorXd::Ones(1);
    sol.objective = objective_of(sol.weights.values);
    sol.kkt_residual = 0.0;
    sol.converged = true;
    return sol;
  }

  const Eigen::MatrixXd hess =
      2.0 * scaled_donors.transpose() * scaled_donors;
  const Eigen::VectorXd lin =
      -2.0 * scaled_donors.transpose() * scaled_target;
  const double scale =
      std::max({1.0, hess.cwiseAbs().maxCoeff(), lin.cwiseAbs().maxCoeff()});

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(j);
  Eigen::VectorXd w = ones / static_cast<double>(j);
  double y = 0.0;
  Eigen::VectorXd z = Eigen::VectorXd::Constant(j, scale);

  // Complementarity target: the Wolfe gap is ~ j * mu, so the per-pair
  // tolerance shrinks with the pool size.
  const double mu_tol =
      options.tol * scale / (2.0 * static_cast<double>(j));
  const double mu_floor = 1e-15 * scale;

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd grad = hess * w + lin;
    const Eigen::VectorXd r_dual = grad - y * ones - z;
    const double r_prim = w.sum() - 1.0;
    const double mu = w.dot(z) / static_cast<double>(j);

    if ((mu <= mu_tol && r_dual.cwiseAbs().maxCoeff() <= mu_tol &&
         std::abs(r_prim) <= 1e-12) ||
        mu <= mu_floor)
      break;

    Eigen::MatrixXd m = hess;
    m.diagonal() += z.cwiseQuotient(w);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);

    const Eigen::VectorXd h = ldlt.solve(ones);
    const double ones_h = ones.dot(h);

    // Affine predictor.
    const Eigen::VectorXd u_aff = ldlt.solve(-r_dual - z);
    const double dy_aff = (-r_prim - ones.dot(u_aff)) / ones_h;
    const Eigen::VectorXd dw_aff = u_aff + dy_aff * h;
    const Eigen::VectorXd dz_aff = -z - z.cwiseQuotient(w).cwiseProduct(dw_aff);

    const double ap_aff = step_to_boundary(w, dw_aff, 1.0);
    const double ad_aff = step_to_boundary(z, dz_aff, 1.0);
    const double mu_aff = (w + ap_aff * dw_aff).dot(z + ad_aff * dz_aff) /
                          static_cast<double>(j);
    double sigma = std::pow(mu_aff / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector.
    const Eigen::VectorXd rc =
        Eigen::VectorXd::Constant(j, sigma * mu) -
        dw_aff.cwiseProduct(dz_aff);
    const Eigen::VectorXd u = ldlt.solve(-r_dual - z + rc.cwiseQuotient(w));
    const double dy = (-r_prim - ones.dot(u)) / ones_h;
    const Eigen::VectorXd dw = u + dy * h;
    const Eigen::VectorXd dz =
        rc.cwiseQuotient(w) - z - z.cwiseQuotient(w).cwiseProduct(dw);

    const double tau = mu / scale < 1e-6 ? 0.9995 : 0.995;
    const double ap = step_to_boundary(w, dw, tau);
    const double ad = step_to_boundary(z, dz, tau);

    w += ap * dw;
    y += ad * dy;
    z += ad * dz;
  }
  sol.iterations = iter;

  // Active-set refinement: equality-constrained least squares on the active
  // face recovers the solution to machine precision once the support is
  // identified. Donors coming out negative are dropped; donors whose
  // gradient undercuts the face multiplier are added (Lawson-Hanson style),
  // which also rescues interior-point stalls.
  const double support_tol = 1e-7;
  {
    std::vector<bool> in_support(static_cast<std::size_t>(j), false);
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < j; ++i)
      if (w(i) > support_tol) {
        support.push_back(i);
        in_support[static_cast<std::size_t>(i)] = true;
      }
    if (support.empty()) {
      Eigen::Index top = 0;
      w.maxCoeff(&top);
      support.push_back(top);
      in_support[static_cast<std::size_t>(top)] = true;
    }

    Eigen::VectorXd anchor = w;
    double last_objective = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < 4 * static_cast<int>(j); ++outer) {
      // Inner loop: feasible least squares on the current face.
      Eigen::VectorXd w_face;
      while (true) {
        const auto m = static_cast<Eigen::Index>(support.size());
        Eigen::VectorXd ws_new(m);
        if (m == 1) {
          ws_new(0) = 1.0;
        } else {
          Eigen::MatrixXd cols(k, m);
          Eigen::VectorXd ws(m);
          for (Eigen::Index i = 0; i < m; ++i) {
            cols.col(i) =
                scaled_donors.col(support[static_cast<std::size_t>(i)]);
            ws(i) = anchor(support[static_cast<std::size_t>(i)]);
          }
          const double ws_sum = ws.sum();
          if (ws_sum > 0.0)
            ws /= ws_sum;  // keep the anchor on the constraint plane
          else
            ws.setConstant(1.0 / static_cast<double>(m));
          const Eigen::MatrixXd basis = simplex_tangent_basis(m);
          const Eigen::MatrixXd g = cols * basis;
          Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(g);
          const Eigen::VectorXd xi = cod.solve(scaled_target - cols * ws);
          ws_new = ws + basis * xi;
        }
        Eigen::Index most_negative = -1;
        for (Eigen::Index i = 0; i < m; ++i)
          if (ws_new(i) < -1e-13 &&
              (most_negative < 0 || ws_new(i) < ws_new(most_negative)))
            most_negative = i;
        if (most_negative < 0) {
          w_face = Eigen::VectorXd::Zero(j);
          for (Eigen::Index i = 0; i < m; ++i)
            w_face(support[static_cast<std::size_t>(i)]) =
                std::max(ws_new(i), 0.0);
          break;
        }
        in_support[static_cast<std::size_t>(
            support[static_cast<std::size_t>(most_negative)])] = false;
        support.erase(support.begin() + most_negative);
      }

      const double face_objective = objective_of(w_face);
      if (face_objective > last_objective - 1e-15 * scale && outer > 0) break;
      last_objective = face_objective;
      anchor = w_face;

      // Outer optimality: on the face the support gradients share one
      // multiplier; any donor strictly below it improves the fit.
      const Eigen::VectorXd grad = hess * w_face + lin;
      double multiplier = 0.0;
      for (const auto idx : support) multiplier += grad(idx);
      multiplier /= static_cast<double>(support.size());
      Eigen::Index entering = -1;
      double worst_violation = 1e-10 * scale;
      for (Eigen::Index i = 0; i < j; ++i) {
        if (in_support[static_cast<std::size_t>(i)]) continue;
        const double violation = multiplier - grad(i);
        if (violation > worst_violation) {
          worst_violation = violation;
          entering = i;
        }
      }
      if (entering < 0) break;
      support.push_back(entering);
      in_support[static_cast<std::size_t>(entering)] = true;
    }
    if (objective_of(anchor) <= objective_of(w)) w = anchor;
  }

  // Exact simplex cleanup: clip stray negatives, renormalize the sum.
  w = w.cwiseMax(0.0);
  const double total = w.sum();
  if (total <= 0.0) throw FitError("solve_simplex_wls: degenerate iterate");
  w /= total;

  sol.weights.values = w;
  sol.objective = objective_of(w);

  const Eigen::VectorXd grad = gradient_of(w);
  const double wolfe_gap = w.dot(grad) - grad.minCoeff();
  sol.kkt_residual = std::max({std::abs(w.sum() - 1.0),
                               std::max(0.0, -w.minCoeff()),
                               wolfe_gap / scale});
  sol.converged = sol.kkt_residual <= options.tol;

  // Non-uniqueness hint: singular reduced Hessian on the final support.
  {
    std::vector<Eigen::Index> final_support;
    for (Eigen::Index i = 0; i < j; ++i)
      if (w(i) > support_tol) final_support.push_back(i);
    const auto m = static_cast<Eigen::Index>(final_support.size());
    if (m >= 2) {
      Eigen::MatrixXd cols(k, m);
      for (Eigen::Index i = 0; i < m; ++i)
        cols.col(i) =
            scaled_donors.col(final_support[static_cast<std::size_t>(i)]);
      const Eigen::MatrixXd g = cols * simplex_tangent_basis(m);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
      const double smin =
          svd.singularValues().size() > 0
              ? svd.singularValues()(svd.singularValues().size() - 1)
              : 0.0;
      const double reduced_hessian_min =
          g.rows() >= g.cols() ? 2.0 * smin * smin : 0.0;
      sol.non_unique_hint = reduced_hessian_min <= 1e-10;
    }
  }

  return sol;
}

}  // namespace scmkit
