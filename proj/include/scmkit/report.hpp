#pragma once

#include <string>
#include <vector>

#include "scmkit/config.hpp"
#include "scmkit/inference.hpp"
#include "scmkit/robustness.hpp"
#include "scmkit/scm.hpp"

namespace scmkit {

/// Report emission. Every file is byte-deterministic for a fixed
/// (config, seed) except the generated_at metadata line in the JSON
/// summaries.

void ensure_out_dir(const std::string& dir);

void write_weights_csv(const SyntheticControlFit& fit, const std::string& path);
void write_gaps_csv(const SyntheticControlFit& fit, const std::string& path);
void write_fit_summary_json(const SyntheticControlFit& fit,
                            const StudyConfig& config, const std::string& path);

void write_pvalues_csv(const PValueSeries& pvalues, const std::string& path);
void write_placebo_gaps_csv(const PlaceboEnsemble& ensemble,
                            const std::string& path);
void write_exclusions_csv(const PlaceboEnsemble& ensemble,
                          const std::string& path);
void write_placebo_summary_json(const PlaceboEnsemble& ensemble,
                                const PValueSeries& pvalues,
                                const StudyConfig& config,
                                const std::string& path);

void write_robustness_report_json(const RobustnessReport& report,
                                  const SyntheticControlFit& baseline,
                                  const std::string& path);
void write_robustness_ranking_csv(const std::vector<RobustnessReport>& reports,
                                  const SyntheticControlFit& baseline,
                                  const std::string& path);

/// Observed-vs-synthetic line chart as a standalone SVG.
void write_paths_svg(const SyntheticControlFit& fit, const StudySpec& spec,
                     const std::string& path);

/// "loo:Belgium" -> "loo_Belgium"; safe for filenames.
std::string sanitize_label(const std::string& label);

}  // namespace scmkit
