#include "scmkit/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "scmkit/errors.hpp"
#include "scmkit/parallel.hpp"

namespace scmkit {

namespace {

constexpr double kNonzeroWeight = 1e-6;

std::map<std::string, double> weight_map(const SyntheticControlFit& fit) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < fit.donor_units.size(); ++i)
    out[fit.donor_units[i]] = fit.weights.values(static_cast<Eigen::Index>(i));
  return out;
}

std::optional<PredictorWeights> frozen_v(const SyntheticControlFit& baseline,
                                         const RobustnessOptions& options) {
  if (options.freeze_v) return baseline.predictor_weights;
  return std::nullopt;
}

// Pool-changing variants in frozen mode keep the baseline scaling so the
// restricted QP is the baseline QP minus columns (objective comparability,
// exact reproduction when only zero-weight donors leave).
FitOptions pool_variant_options(const SyntheticControlFit& baseline,
                                const RobustnessOptions& options) {
  FitOptions out = options.fit;
  if (options.freeze_v) out.frozen_standardization = baseline.standardization;
  return out;
}

}  // namespace

double RobustnessReport::att_delta(const SyntheticControlFit& baseline) const {
  return fit ? fit->att - baseline.att : 0.0;
}

double RobustnessReport::end_delta_difference(
    const SyntheticControlFit& baseline) const {
  return fit ? fit->end_of_sample_delta - baseline.end_of_sample_delta : 0.0;
}

double RobustnessReport::weight_l1_distance(
    const SyntheticControlFit& baseline) const {
  if (!fit) return 0.0;
  const auto a = weight_map(baseline);
  const auto b = weight_map(*fit);
  double dist = 0.0;
  for (const auto& [unit, w] : a) {
    const auto it = b.find(unit);
    dist += std::abs(w - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [unit, w] : b)
    if (!a.count(unit)) dist += std::abs(w);
  return dist;
}

std::vector<RobustnessReport> leave_one_out(
    const PanelDataset& data, const StudySpec& spec,
    const SyntheticControlFit& baseline, const RobustnessOptions& options) {
  std::vector<std::string> targets;
  for (std::size_t i = 0; i < baseline.donor_units.size(); ++i)
    if (baseline.weights.values(static_cast<Eigen::Index>(i)) > kNonzeroWeight)
      targets.push_back(baseline.donor_units[i]);

  std::vector<RobustnessReport> reports(targets.size());
  parallel_for(targets.size(), options.jobs, [&](std::size_t i) {
    const std::string& dropped = targets[i];
    RobustnessReport& report = reports[i];
    report.label = "loo:" + dropped;
    StudySpec variant = spec;
    variant.donor_units.clear();
    for (const auto& d : spec.donor_units)
      if (d != dropped) variant.donor_units.push_back(d);
    if (variant.donor_units.empty()) {
      report.feasible = false;
      report.message = "donor pool empty after dropping " + dropped;
      return;
    }
    FitOptions fit_options = pool_variant_options(baseline, options);
    fit_options.allow_single_donor = true;  // 2-donor pools degrade to w=(1)
    try {
      report.fit = fit_synthetic_control(data, variant,
                                         frozen_v(baseline, options),
                                         fit_options);
    } catch (const std::exception& e) {
      report.feasible = false;
      report.message = e.what();
    }
  });

  std::stable_sort(reports.begin(), reports.end(),
                   [&](const RobustnessReport& a, const RobustnessReport& b) {
                     if (a.feasible != b.feasible) return a.feasible;
                     return std::abs(a.att_delta(baseline)) >
                            std::abs(b.att_delta(baseline));
                   });
  return reports;
}

RobustnessReport in_time_placebo(const PanelDataset& data,
                                 const StudySpec& spec, int placebo_treatment,
                                 const SyntheticControlFit& baseline,
                                 const RobustnessOptions& options) {
  if (!(spec.t_start < placebo_treatment &&
        placebo_treatment < spec.treatment_period))
    throw ConfigError("in-time placebo treatment must lie strictly inside "
                      "(t_start, treatment_period)");
  if (data.periods_in(spec.t_start, placebo_treatment - 1).size() < 4)
    throw ConfigError("in-time placebo needs at least 4 pre-placebo periods");

  StudySpec variant = spec;
  variant.treatment_period = placebo_treatment;
  variant.t_end = spec.treatment_period - 1;  // truncate before real treatment
  variant.training_end =
      std::min(spec.training_end, placebo_treatment - 2);
  if (variant.training_end <= variant.t_start)
    throw ConfigError("in-time placebo window too short for a training/"
                      "validation split");

  // Predictor references must stay inside the shortened pre-period.
  for (auto& def : variant.predictors) {
    const int bound = placebo_treatment - 1;
    if (def.period) def.period = std::min(*def.period, bound);
    if (def.to) def.to = std::min(*def.to, bound);
    if (def.from && def.to) def.from = std::min(*def.from, *def.to);
  }

  RobustnessReport report;
  report.label = "in-time:" + std::to_string(placebo_treatment);
  try {
    report.fit = fit_synthetic_control(data, variant,
                                       frozen_v(baseline, options),
                                       options.fit);
  } catch (const std::exception& e) {
    report.feasible = false;
    report.message = e.what();
  }
  return report;
}

RobustnessReport restricted_pool(const PanelDataset& data,
                                 const StudySpec& spec,
                                 const std::vector<std::string>& keep,
                                 const SyntheticControlFit& baseline,
                                 const RobustnessOptions& options,
                                 const std::string& label) {
  const std::set<std::string> pool(spec.donor_units.begin(),
                                   spec.donor_units.end());
  const std::set<std::string> kept(keep.begin(), keep.end());
  for (const auto& unit : kept)
    if (!pool.count(unit))
      throw ConfigError("restricted pool contains unknown donor: " + unit);
  if (kept.size() < 2)
    throw ConfigError("restricted pool needs at least 2 donors");

  StudySpec variant = spec;
  variant.donor_units.clear();
  for (const auto& d : spec.donor_units)
    if (kept.count(d)) variant.donor_units.push_back(d);

  RobustnessReport report;
  report.label = label.empty()
                     ? "pool:" + std::to_string(kept.size()) + "-donors"
                     : label;
  try {
    report.fit = fit_synthetic_control(data, variant,
                                       frozen_v(baseline, options),
                                       pool_variant_options(baseline, options));
  } catch (const std::exception& e) {
    report.feasible = false;
    report.message = e.what();
  }
  return report;
}

}  // namespace scmkit
