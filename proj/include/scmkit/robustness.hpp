#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/scm.hpp"

namespace scmkit {

struct RobustnessOptions {
  FitOptions fit;
  bool freeze_v = false;  // reuse the baseline's predictor weights
  int jobs = 0;
};

/// One robustness variant. Deltas against the baseline are always derived
/// from the two fits rather than stored.
struct RobustnessReport {
  std::string label;
  bool feasible = true;
  std::string message;  // infeasibility reason when !feasible
  std::optional<SyntheticControlFit> fit;

  double att_delta(const SyntheticControlFit& baseline) const;
  double end_delta_difference(const SyntheticControlFit& baseline) const;
  /// L1 reallocation distance between donor weights, aligned by unit id.
  double weight_l1_distance(const SyntheticControlFit& baseline) const;
};

/**
 * Refits once per donor carrying nonzero baseline weight (> 1e-6), dropping
 * that donor; reports sorted by |att delta| descending, infeasible last.
 */
std::vector<RobustnessReport> leave_one_out(const PanelDataset& data,
                                            const StudySpec& spec,
                                            const SyntheticControlFit& baseline,
                                            const RobustnessOptions& options = {});

/**
 * Pretends treatment at `placebo_treatment` inside the pre-period and
 * truncates the sample at the true treatment period minus one so that no
 * real treatment contaminates the placebo post-window.
 */
RobustnessReport in_time_placebo(const PanelDataset& data,
                                 const StudySpec& spec,
                                 int placebo_treatment,
                                 const SyntheticControlFit& baseline,
                                 const RobustnessOptions& options = {});

/// Refit on a restricted donor pool (keep must be >= 2 known donors).
RobustnessReport restricted_pool(const PanelDataset& data,
                                 const StudySpec& spec,
                                 const std::vector<std::string>& keep,
                                 const SyntheticControlFit& baseline,
                                 const RobustnessOptions& options = {},
                                 const std::string& label = "");

}  // namespace scmkit
