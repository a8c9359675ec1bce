#include "scmkit/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "scmkit/errors.hpp"
#include "scmkit/parallel.hpp"
#include "scmkit/text.hpp"

namespace scmkit {

namespace {

std::string ratio_reason(double ratio) {
  // "mspe>4x" style: integral ratios render without a decimal point.
  const double rounded = std::round(ratio);
  if (rounded == ratio && std::abs(ratio) < 1e15)
    return "mspe>" + std::to_string(static_cast<long long>(rounded)) + "x";
  return "mspe>" + format_double(ratio) + "x";
}

}  // namespace

PlaceboEnsemble run_in_space_placebos(const PanelDataset& data,
                                      const StudySpec& spec,
                                      const PlaceboOptions& options,
                                      const SyntheticControlFit* baseline) {
  const ValidationReport validation = validate_study(data, spec);
  if (!validation.ok())
    throw FitError("study rejected by validation:\n" + validation.to_string());

  PlaceboEnsemble ensemble;
  ensemble.settings = spec.inference;
  ensemble.treatment_period = spec.treatment_period;
  ensemble.t_end = spec.t_end;
  ensemble.treated = baseline
                         ? *baseline
                         : fit_synthetic_control(data, spec, std::nullopt,
                                                 options.fit);

  const std::size_t n = spec.donor_units.size();
  ensemble.placebos.resize(n);
  parallel_for(n, options.jobs, [&](std::size_t i) {
    const std::string& pseudo = spec.donor_units[i];
    StudySpec placebo_spec = spec;
    placebo_spec.treated_unit = pseudo;
    placebo_spec.donor_units.clear();
    for (const auto& d : spec.donor_units)
      if (d != pseudo) placebo_spec.donor_units.push_back(d);
    placebo_spec.excluded_units.push_back({spec.treated_unit, "treated"});

    PlaceboFit& out = ensemble.placebos[i];
    out.unit = pseudo;
    try {
      const SyntheticControlFit fit =
          fit_synthetic_control(data, placebo_spec, std::nullopt, options.fit);
      out.gap_series = fit.gap_series;
      out.pre_rmspe = fit.pre_rmspe;
      out.att = fit.att;
    } catch (const std::exception& e) {
      out.excluded = true;
      out.exclusion_reason = "fit-failure";
      out.detail = e.what();
    }
  });

  std::sort(ensemble.placebos.begin(), ensemble.placebos.end(),
            [](const PlaceboFit& a, const PlaceboFit& b) {
              return a.unit < b.unit;
            });
  apply_mspe_filters(ensemble);
  return ensemble;
}

void apply_mspe_filters(PlaceboEnsemble& ensemble) {
  const auto& settings = ensemble.settings;
  const double treated_rmspe = ensemble.treated.pre_rmspe;
  for (auto& placebo : ensemble.placebos) {
    if (placebo.excluded) continue;
    if (settings.mspe_discard_ratio &&
        placebo.pre_rmspe > *settings.mspe_discard_ratio * treated_rmspe) {
      placebo.excluded = true;
      placebo.exclusion_reason = ratio_reason(*settings.mspe_discard_ratio);
      continue;
    }
    if (settings.mspe_inclusion_ratio &&
        placebo.pre_rmspe > *settings.mspe_inclusion_ratio * treated_rmspe) {
      placebo.excluded = true;
      placebo.exclusion_reason = ratio_reason(*settings.mspe_inclusion_ratio);
    }
  }
}

PValueSeries empirical_p_values(const PlaceboEnsemble& ensemble,
                                const InferenceSettings& settings) {
  std::vector<const PlaceboFit*> included;
  for (const auto& p : ensemble.placebos)
    if (!p.excluded) included.push_back(&p);

  if (included.empty()) {
    std::map<std::string, int> reasons;
    for (const auto& p : ensemble.placebos) ++reasons[p.exclusion_reason];
    std::ostringstream os;
    os << "empty reference distribution: all "
       << ensemble.placebos.size() << " placebos excluded (";
    bool first = true;
    for (const auto& [reason, count] : reasons) {
      if (!first) os << ", ";
      os << reason << " x" << count;
      first = false;
    }
    os << ")";
    throw InferenceError(os.str());
  }

  const int denominator = static_cast<int>(included.size()) +
                          (settings.include_treated_in_denominator ? 1 : 0);

  PValueSeries out;
  for (const auto& [period, treated_gap] : ensemble.treated.gap_series) {
    if (period < ensemble.treatment_period || period > ensemble.t_end)
      continue;
    int numerator = 0;
    for (const auto* p : included) {
      const auto it = p->gap_series.find(period);
      if (it == p->gap_series.end())
        throw InferenceError("placebo " + p->unit +
                             " lacks a gap at period " +
                             std::to_string(period));
      const double g = it->second;
      bool at_least_as_large = false;
      if (settings.sidedness == Sidedness::TwoSidedAbsolute ||
          treated_gap == 0.0) {
        at_least_as_large = std::abs(g) >= std::abs(treated_gap);
      } else if (treated_gap < 0.0) {
        at_least_as_large = g <= treated_gap;
      } else {
        at_least_as_large = g >= treated_gap;
      }
      if (at_least_as_large) ++numerator;
    }
    out.by_period[period] = {static_cast<double>(numerator) / denominator,
                             numerator, denominator};
  }
  if (out.by_period.empty())
    throw InferenceError("no post-treatment periods for p-values");
  out.end_of_sample = out.by_period.rbegin()->second;
  return out;
}

}  // namespace scmkit
