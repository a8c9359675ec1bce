#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scmkit/errors.hpp"

namespace scmkit {

/**
 * Balanced-panel container: time series keyed (unit, variable, period) plus
 * time-invariant values keyed (unit, variable). Whether a series variable
 * acts as an outcome or as a time-varying covariate is decided by the study
 * spec that consumes it, not by the container.
 *
 * Immutable by convention once loading (and composite derivation) is done;
 * read-only sharing across parallel fits is safe.
 */
class PanelDataset {
 public:
  /// Inserts one observation. Duplicate (unit, variable, period) keys and
  /// non-finite values are hard errors.
  void set_value(const std::string& unit, const std::string& variable,
                 int period, double value);

  /// Inserts one time-invariant value. Duplicate (unit, variable) is an error.
  void set_static(const std::string& unit, const std::string& variable,
                  double value);

  const std::vector<std::string>& units() const { return units_; }
  const std::vector<int>& periods() const { return periods_; }

  /// Dataset periods inside [lo, hi], ascending.
  std::vector<int> periods_in(int lo, int hi) const;

  bool has_value(const std::string& unit, const std::string& variable,
                 int period) const;
  double value(const std::string& unit, const std::string& variable,
               int period) const;
  std::optional<double> maybe_value(const std::string& unit,
                                    const std::string& variable,
                                    int period) const;

  bool has_static(const std::string& unit, const std::string& variable) const;
  double static_value(const std::string& unit,
                      const std::string& variable) const;
  std::optional<double> maybe_static(const std::string& unit,
                                     const std::string& variable) const;

  bool has_series_variable(const std::string& variable) const;
  bool has_static_variable(const std::string& variable) const;
  bool has_variable(const std::string& variable) const;

  std::vector<std::string> series_variables() const;
  std::vector<std::string> static_variables() const;

  bool empty() const { return series_.empty() && statics_.empty(); }

  /// Row-level visitation in deterministic (unit, variable, period) order;
  /// used by the CSV writer.
  template <typename SeriesFn, typename StaticFn>
  void for_each(SeriesFn&& on_series, StaticFn&& on_static) const {
    for (const auto& [unit, vars] : series_)
      for (const auto& [var, byPeriod] : vars)
        for (const auto& [period, v] : byPeriod) on_series(unit, var, period, v);
    for (const auto& [unit, vars] : statics_)
      for (const auto& [var, v] : vars) on_static(unit, var, v);
  }

 private:
  // unit -> variable -> period -> value
  std::map<std::string, std::map<std::string, std::map<int, double>>> series_;
  // unit -> variable -> value
  std::map<std::string, std::map<std::string, double>> statics_;
  std::vector<std::string> units_;
  std::vector<int> periods_;

  void note_unit(const std::string& unit);
  void note_period(int period);
};

/// Column-role mapping for the long-format panel CSV.
struct CsvSchema {
  std::string unit_column = "unit";
  std::string period_column = "period";
  std::string variable_column = "variable";
  std::string value_column = "value";
};

PanelDataset load_panel_csv(const std::string& path,
                            const CsvSchema& schema = CsvSchema{});
void write_panel_csv(const PanelDataset& data, const std::string& path);

/// Merges `extra` into `base`; duplicate keys across files are errors.
void merge_panel(PanelDataset& base, const PanelDataset& extra);

enum class PredictorKind { Covariate, OutcomeLag, OutcomeMean };

/**
 * One matching variable. `period` is the benchmark year of an outcome lag;
 * `from`/`to` bound the averaging range of an outcome mean or a time-varying
 * covariate (a covariate with no declared range averages over the full
 * pre-treatment window).
 */
struct PredictorDef {
  PredictorKind kind = PredictorKind::Covariate;
  std::string name;
  std::optional<int> period;
  std::optional<int> from;
  std::optional<int> to;

  std::string label() const;
};

enum class Sidedness { TwoSidedAbsolute, OneSidedSigned };

/// Placebo-accuracy filters and p-value conventions. A disengaged optional
/// turns the corresponding filter off.
struct InferenceSettings {
  std::optional<double> mspe_inclusion_ratio = 1.0;
  std::optional<double> mspe_discard_ratio = 4.0;
  Sidedness sidedness = Sidedness::TwoSidedAbsolute;
  bool include_treated_in_denominator = false;
};

struct ExcludedUnit {
  std::string unit;
  std::string reason;  // e.g. "spillover-neighbor"
};

/**
 * Full study description. Windows: training [t_start, training_end],
 * validation (training_end, treatment_period), post [treatment_period, t_end].
 */
struct StudySpec {
  std::string treated_unit;
  std::vector<std::string> donor_units;
  std::vector<ExcludedUnit> excluded_units;
  std::string outcome;
  int t_start = 0;
  int training_end = 0;
  int treatment_period = 0;  // first treated period (the paper's T0)
  int t_end = 0;
  std::vector<PredictorDef> predictors;
  InferenceSettings inference;
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

/// Checks the study against the dataset: window ordering, donor-pool
/// hygiene (treated/excluded collisions), balance of every outcome the study
/// touches, and resolvability of every predictor. Violations are data, not
/// exceptions.
ValidationReport validate_study(const PanelDataset& data, const StudySpec& spec);

struct PredictorMatrices {
  Eigen::VectorXd x_treated;        // k
  Eigen::MatrixXd x_donors;         // k x J, columns in spec.donor_units order
  Eigen::VectorXd y_treated_pre;    // raw outcome over [t_start, treatment)
  Eigen::MatrixXd y_donors_pre;     // pre-periods x J
  std::vector<int> pre_periods;
  std::vector<std::string> predictor_labels;
  std::vector<std::string> warnings;
};

/// Builds X/Y matrices over the full pre-treatment window.
PredictorMatrices build_predictor_matrices(const PanelDataset& data,
                                           const StudySpec& spec);

/**
 * Variant with predictor period references clamped to [t_start, window_end];
 * used to fit candidate donor weights on the training window during
 * predictor-weight selection. Y matrices always span the full pre-window.
 */
PredictorMatrices build_predictor_matrices(const PanelDataset& data,
                                           const StudySpec& spec,
                                           int window_end);

/// Raw outcome matrix (rows = periods, cols = units order given).
Eigen::MatrixXd outcome_matrix(const PanelDataset& data,
                               const std::string& outcome,
                               const std::vector<std::string>& units,
                               const std::vector<int>& periods);

}  // namespace scmkit
