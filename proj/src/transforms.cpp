#include "scmkit/transforms.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "scmkit/errors.hpp"

namespace scmkit {

StandardizedPredictors standardize_predictors(
    const Eigen::VectorXd& x_treated, const Eigen::MatrixXd& x_donors,
    const std::vector<std::string>& labels) {
  const Eigen::Index k = x_treated.size();
  const Eigen::Index j = x_donors.cols();
  if (k < 1 || x_donors.rows() != k)
    throw FitError("standardize_predictors: inconsistent dimensions");
  if (j < 2) throw FitError("standardize_predictors: need at least 2 donors");

  StandardizedPredictors out;
  out.x_treated.resize(k);
  out.x_donors.resize(k, j);
  out.stats.mean.resize(k);
  out.stats.stddev.resize(k);
  out.stats.labels = labels;

  const double n = static_cast<double>(j + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double mean = (x_treated(i) + x_donors.row(i).sum()) / n;
    double ss = (x_treated(i) - mean) * (x_treated(i) - mean);
    for (Eigen::Index d = 0; d < j; ++d)
      ss += (x_donors(i, d) - mean) * (x_donors(i, d) - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) {
      const std::string name =
          i < static_cast<Eigen::Index>(labels.size())
              ? labels[static_cast<std::size_t>(i)]
              : "#" + std::to_string(i);
      throw FitError("zero-variance predictor: " + name);
    }
    out.stats.mean(i) = mean;
    out.stats.stddev(i) = sd;
    out.x_treated(i) = (x_treated(i) - mean) / sd;
    for (Eigen::Index d = 0; d < j; ++d)
      out.x_donors(i, d) = (x_donors(i, d) - mean) / sd;
  }
  return out;
}

CompositeResult pca_first_component(const PanelDataset& data,
                                    const CompositeSpec& spec) {
  if (spec.indicators.size() < 2)
    throw ConfigError("composite needs at least 2 indicators");
  const std::string anchor =
      spec.sign_anchor.empty() ? spec.indicators.front() : spec.sign_anchor;
  const auto anchor_it =
      std::find(spec.indicators.begin(), spec.indicators.end(), anchor);
  if (anchor_it == spec.indicators.end())
    throw ConfigError("sign anchor '" + anchor + "' is not an indicator");
  const auto anchor_idx = static_cast<Eigen::Index>(
      std::distance(spec.indicators.begin(), anchor_it));

  const auto m = static_cast<Eigen::Index>(spec.indicators.size());
  const auto periods = data.periods_in(spec.from, spec.to);

  // Complete cells only; a partially observed cell is a data defect.
  std::vector<std::pair<std::string, int>> cells;
  for (const auto& unit : data.units()) {
    for (int p : periods) {
      int present = 0;
      for (const auto& ind : spec.indicators)
        if (data.has_value(unit, ind, p)) ++present;
      if (present == 0) continue;
      if (present < static_cast<int>(spec.indicators.size()))
        throw PanelError("incomplete indicator cell: (" + unit + ", " +
                         std::to_string(p) + ")");
      cells.emplace_back(unit, p);
    }
  }
  const auto n = static_cast<Eigen::Index>(cells.size());
  if (n < 2)
    throw PanelError("insufficient data: need at least 2 complete indicator "
                     "observations, have " +
                     std::to_string(n));

  Eigen::MatrixXd obs(n, m);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < m; ++c)
      obs(r, c) = data.value(cells[static_cast<std::size_t>(r)].first,
                             spec.indicators[static_cast<std::size_t>(c)],
                             cells[static_cast<std::size_t>(r)].second);

  // Pooled z-scores (population convention), then the correlation matrix.
  for (Eigen::Index c = 0; c < m; ++c) {
    const double mean = obs.col(c).mean();
    const double sd =
        std::sqrt(obs.col(c).array().square().mean() - mean * mean);
    if (!(sd > 0.0))
      throw PanelError("zero-variance indicator: " +
                       spec.indicators[static_cast<std::size_t>(c)]);
    obs.col(c) = (obs.col(c).array() - mean) / sd;
  }
  const Eigen::MatrixXd corr =
      (obs.transpose() * obs) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  if (eig.info() != Eigen::Success)
    throw FitError("eigen decomposition of indicator correlation failed");
  Eigen::VectorXd v = eig.eigenvectors().col(m - 1);
  const double lambda = eig.eigenvalues()(m - 1);
  if (v(anchor_idx) < 0.0) v = -v;

  CompositeResult out;
  out.loadings = v;
  out.eigenvalue = lambda;
  out.explained_ratio = lambda / static_cast<double>(m);
  out.eigen_residual = (corr * v - lambda * v).cwiseAbs().maxCoeff();
  out.indicator_order = spec.indicators;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& [unit, period] = cells[static_cast<std::size_t>(r)];
    out.scores[unit][period] = obs.row(r).dot(v);
  }
  return out;
}

void store_composite(PanelDataset& data, const std::string& outcome_name,
                     const CompositeResult& result) {
  for (const auto& [unit, by_period] : result.scores)
    for (const auto& [period, score] : by_period)
      data.set_value(unit, outcome_name, period, score);
}

}  // namespace scmkit
