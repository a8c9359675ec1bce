#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/scm.hpp"

namespace scmkit {

struct PlaceboFit {
  std::string unit;
  Series gap_series;
  double pre_rmspe = 0.0;
  double att = 0.0;
  bool excluded = false;
  std::string exclusion_reason;  // "mspe>4x", "mspe>1x", "fit-failure"
  std::string detail;            // diagnostics for fit failures
};

/// One placebo fit per donor (sorted by unit id) plus the treated reference
/// fit and a snapshot of the settings the filters ran with.
struct PlaceboEnsemble {
  SyntheticControlFit treated;
  std::vector<PlaceboFit> placebos;
  InferenceSettings settings;
  int treatment_period = 0;
  int t_end = 0;
};

struct PValuePoint {
  double p = 0.0;
  int numerator = 0;
  int denominator = 0;
};

struct PValueSeries {
  std::map<int, PValuePoint> by_period;  // post-treatment periods
  PValuePoint end_of_sample;
};

struct PlaceboOptions {
  FitOptions fit;
  int jobs = 0;  // 0 = hardware concurrency
};

/**
 * In-space permutation: refits the full pipeline (predictor-weight search
 * included) with each donor as pseudo-treated, the donor removed from its
 * own pool and the true treated unit excluded. Prediction-accuracy filters
 * are applied afterwards; a failed placebo fit is recorded, never fatal.
 */
PlaceboEnsemble run_in_space_placebos(
    const PanelDataset& data, const StudySpec& spec,
    const PlaceboOptions& options = {},
    const SyntheticControlFit* baseline = nullptr);

/// Marks placebos excluded per the MSPE ratio filters in
/// `ensemble.settings`; previously excluded entries are left untouched.
void apply_mspe_filters(PlaceboEnsemble& ensemble);

/**
 * Empirical permutation p-values for every post-treatment period and at the
 * end of sample: the fraction of retained placebos whose gap is at least as
 * large as the treated unit's (absolute-value comparison by default, signed
 * in the treated gap's direction otherwise).
 */
PValueSeries empirical_p_values(const PlaceboEnsemble& ensemble,
                                const InferenceSettings& settings);

}  // namespace scmkit
