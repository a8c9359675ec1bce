#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"

namespace scmkit {

/// Per-predictor location/scale used to z-score the matching variables
/// across the treated unit and the donors (population 1/N convention).
struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<std::string> labels;
};

struct StandardizedPredictors {
  Eigen::VectorXd x_treated;
  Eigen::MatrixXd x_donors;
  StandardizationStats stats;
};

/**
 * Z-scores each predictor row of the concatenated [x_treated | x_donors]
 * block so every row has mean 0 and standard deviation 1 across the J+1
 * units. A zero-variance row is an error naming the predictor.
 */
StandardizedPredictors standardize_predictors(
    const Eigen::VectorXd& x_treated, const Eigen::MatrixXd& x_donors,
    const std::vector<std::string>& labels = {});

/// Composite-outcome definition: indicators to pool, the period range over
/// which scores are produced, and the indicator whose loading anchors the
/// eigenvector sign.
struct CompositeSpec {
  std::vector<std::string> indicators;
  int from = 0;
  int to = 0;
  std::string sign_anchor;  // defaults to the first indicator when empty
};

struct CompositeResult {
  // (unit, period) -> first-principal-component score
  std::map<std::string, std::map<int, double>> scores;
  Eigen::VectorXd loadings;
  double eigenvalue = 0.0;
  double explained_ratio = 0.0;   // eigenvalue / n_indicators
  double eigen_residual = 0.0;    // ||C v - lambda v||_inf
  std::vector<std::string> indicator_order;
};

/**
 * First principal component of the pooled unit-period indicator panel:
 * indicators are z-scored over all complete (unit, period) cells in range,
 * the leading eigenvector of their correlation matrix is extracted, and its
 * sign is fixed so the anchor indicator loads positively. Scores are the
 * projections of each cell onto that eigenvector.
 */
CompositeResult pca_first_component(const PanelDataset& data,
                                    const CompositeSpec& spec);

/// Writes composite scores back into the panel under `outcome_name`.
void store_composite(PanelDataset& data, const std::string& outcome_name,
                     const CompositeResult& result);

}  // namespace scmkit
