#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/qp.hpp"
#include "scmkit/transforms.hpp"

namespace scmkit {

/// Diagonal predictor-importance weights, normalized to sum 1.
struct PredictorWeights {
  Eigen::VectorXd values;
};

struct PredictorBalanceRow {
  std::string label;
  double treated = 0.0;
  double synthetic = 0.0;  // in original (unstandardized) units
};

using Series = std::map<int, double>;

struct SyntheticControlFit {
  std::vector<std::string> donor_units;  // labels for `weights`
  SimplexWeights weights;
  PredictorWeights predictor_weights;
  Series observed_path;    // treated outcome over [t_start, t_end]
  Series synthetic_path;   // sum_j w_j Y_j(t) over [t_start, t_end]
  Series gap_series;       // observed - synthetic
  double pre_rmspe = 0.0;  // root mean squared gap over [t_start, treatment)
  double att = 0.0;        // mean gap over [treatment, t_end]
  double end_of_sample_delta = 0.0;
  std::vector<PredictorBalanceRow> predictor_balance;
  StandardizationStats standardization;
  QpSolution qp;  // solver diagnostics for the final weight fit
  std::vector<std::string> warnings;
};

struct FitOptions {
  QpOptions qp;
  /// Relaxed stopping mode: accepts iterates within a 5% KKT margin.
  bool loose_feasibility = false;
  /// Robustness refits may shrink the pool to one donor; the fit then
  /// degenerates to w = (1) and predictor weights play no role.
  bool allow_single_donor = false;
  /// Frozen-mode robustness refits reuse the baseline scaling so that pool
  /// restrictions act on the identical QP (objective comparability).
  std::optional<StandardizationStats> frozen_standardization;

  QpOptions effective_qp() const {
    QpOptions out = qp;
    if (loose_feasibility) out.tol = 0.05;
    return out;
  }
};

/**
 * Chooses predictor weights by derivative-free search (Nelder-Mead over a
 * softmax parameterization, five deterministic starts) minimizing the
 * validation-window MSPE of donor weights fit on the training window. For
 * k <= 3 predictors an exhaustive 0.02-step simplex grid is cross-checked.
 * Ties break by training MSPE, then lexicographically smallest V.
 */
PredictorWeights optimize_predictor_weights(const PanelDataset& data,
                                            const StudySpec& spec,
                                            const FitOptions& options = {});

/**
 * Full nested fit: donor weights are refit on the whole pre-treatment window
 * with the chosen predictor weights, and the synthetic path, gap series,
 * pre-treatment RMSPE, ATT and end-of-sample delta are derived from them.
 */
SyntheticControlFit fit_synthetic_control(
    const PanelDataset& data, const StudySpec& spec,
    const std::optional<PredictorWeights>& v = std::nullopt,
    const FitOptions& options = {});

/// Pointwise observed - synthetic; the two series must share their domain.
Series compute_gap_series(const Series& observed, const Series& synthetic);

/**
 * Latent factor model simulator:
 *   Y[i,t] = eta_t + pi_t . Z_i + mu_t . phi_i + sigma * eps[i,t]
 * with the treatment effect delta(t) added to unit 0 from the treatment
 * period on. Identical seeds produce identical panels.
 */
struct FactorModelSpec {
  int n_units = 0;    // unit 0 is the treated unit
  int n_periods = 0;
  int first_period = 1;
  int treatment_period = 0;
  Eigen::VectorXd time_effects;        // eta, n_periods
  Eigen::MatrixXd covariate_loadings;  // pi, n_periods x r
  Eigen::MatrixXd covariates;          // Z, n_units x r
  Eigen::MatrixXd factors;             // mu, n_periods x F
  Eigen::MatrixXd factor_loadings;     // phi, n_units x F
  double noise_scale = 0.0;
  std::function<double(int)> treatment_effect;  // may be empty (no effect)
  std::uint64_t seed = 0;
  std::string outcome_name = "y";
  std::string covariate_prefix = "z";
  std::string treated_unit = "treated";
  std::string donor_prefix = "d";
};

PanelDataset simulate_factor_model(const FactorModelSpec& spec);

/// Deterministic random instance of the factor model, optionally placing the
/// treated unit's covariates and factor loadings inside the donor convex
/// hull (exact recovery territory for the estimator).
struct FactorModelGenOptions {
  int n_units = 0;
  int n_periods = 0;
  int first_period = 1;
  int treatment_period = 0;
  int n_covariates = 2;
  int n_factors = 2;
  double noise_scale = 0.0;
  double delta = 0.0;  // constant post-treatment effect on the treated unit
  bool treated_in_hull = true;
  double signal_scale = 1.0;
  std::uint64_t seed = 0;
};

FactorModelSpec random_factor_model_spec(const FactorModelGenOptions& gen);

/// Unit names of a simulated panel, treated first.
std::vector<std::string> factor_model_units(const FactorModelSpec& spec);

/// Convenience study spec for a simulated panel: outcome lags at `n_lags`
/// evenly spread pre-treatment years plus every Z covariate.
StudySpec default_simulated_study(const FactorModelSpec& spec, int n_lags = 3);

}  // namespace scmkit
