#include "scmkit/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "scmkit/errors.hpp"
#include "scmkit/text.hpp"

namespace scmkit {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file: " + path);
  return out;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json weights_json(const SyntheticControlFit& fit) {
  json arr = json::array();
  for (std::size_t i = 0; i < fit.donor_units.size(); ++i)
    arr.push_back({{"unit", fit.donor_units[i]},
                   {"weight", fit.weights.values(static_cast<Eigen::Index>(i))}});
  return arr;
}

json fit_json(const SyntheticControlFit& fit) {
  json j;
  j["att"] = fit.att;
  j["pre_rmspe"] = fit.pre_rmspe;
  j["end_of_sample_delta"] = fit.end_of_sample_delta;
  j["weights"] = weights_json(fit);
  json vw = json::array();
  for (Eigen::Index i = 0; i < fit.predictor_weights.values.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    vw.push_back({{"predictor", idx < fit.predictor_balance.size()
                                    ? fit.predictor_balance[idx].label
                                    : "#" + std::to_string(i)},
                  {"v", fit.predictor_weights.values(i)}});
  }
  j["predictor_weights"] = vw;
  json balance = json::array();
  for (const auto& row : fit.predictor_balance)
    balance.push_back({{"predictor", row.label},
                       {"treated", row.treated},
                       {"synthetic", row.synthetic}});
  j["predictor_balance"] = balance;
  j["qp"] = {{"objective", fit.qp.objective},
             {"kkt_residual", fit.qp.kkt_residual},
             {"iterations", fit.qp.iterations},
             {"converged", fit.qp.converged},
             {"non_unique_hint", fit.qp.non_unique_hint}};
  j["warnings"] = fit.warnings;
  return j;
}

json study_json(const StudyConfig& config) {
  const auto& s = config.study;
  return {{"treated_unit", s.treated_unit},
          {"outcome", s.outcome},
          {"donors", s.donor_units.size()},
          {"t_start", s.t_start},
          {"training_end", s.training_end},
          {"treatment_period", s.treatment_period},
          {"t_end", s.t_end}};
}

void dump_json(const json& j, const std::string& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + dir);
}

std::string sanitize_label(const std::string& label) {
  std::string out = label;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.')
      c = '_';
  return out;
}

void write_weights_csv(const SyntheticControlFit& fit,
                       const std::string& path) {
  auto out = open_out(path);
  out << "unit,weight\n";
  for (std::size_t i = 0; i < fit.donor_units.size(); ++i)
    out << fit.donor_units[i] << ','
        << format_double(fit.weights.values(static_cast<Eigen::Index>(i)))
        << '\n';
}

void write_gaps_csv(const SyntheticControlFit& fit, const std::string& path) {
  auto out = open_out(path);
  out << "period,observed,synthetic,gap\n";
  for (const auto& [period, observed] : fit.observed_path)
    out << period << ',' << format_double(observed) << ','
        << format_double(fit.synthetic_path.at(period)) << ','
        << format_double(fit.gap_series.at(period)) << '\n';
}

void write_fit_summary_json(const SyntheticControlFit& fit,
                            const StudyConfig& config,
                            const std::string& path) {
  json j;
  j["config_hash"] = config.config_hash;
  j["seed"] = config.seed;
  j["generated_at"] = utc_now();
  j["study"] = study_json(config);
  j["fit"] = fit_json(fit);
  dump_json(j, path);
}

void write_pvalues_csv(const PValueSeries& pvalues, const std::string& path) {
  auto out = open_out(path);
  out << "period,p,numerator,denominator\n";
  for (const auto& [period, point] : pvalues.by_period)
    out << period << ',' << format_double(point.p) << ',' << point.numerator
        << ',' << point.denominator << '\n';
}

void write_placebo_gaps_csv(const PlaceboEnsemble& ensemble,
                            const std::string& path) {
  auto out = open_out(path);
  out << "unit,period,gap\n";
  for (const auto& placebo : ensemble.placebos) {
    if (placebo.excluded && placebo.gap_series.empty()) continue;
    for (const auto& [period, gap] : placebo.gap_series)
      out << placebo.unit << ',' << period << ',' << format_double(gap)
          << '\n';
  }
}

void write_exclusions_csv(const PlaceboEnsemble& ensemble,
                          const std::string& path) {
  auto out = open_out(path);
  out << "unit,excluded,reason,pre_rmspe,rmspe_ratio\n";
  const double treated = ensemble.treated.pre_rmspe;
  for (const auto& placebo : ensemble.placebos) {
    const double ratio = treated > 0.0
                             ? placebo.pre_rmspe / treated
                             : std::numeric_limits<double>::infinity();
    out << placebo.unit << ',' << (placebo.excluded ? 1 : 0) << ','
        << placebo.exclusion_reason << ',' << format_double(placebo.pre_rmspe)
        << ',' << (placebo.gap_series.empty() ? "" : format_double(ratio))
        << '\n';
  }
}

void write_placebo_summary_json(const PlaceboEnsemble& ensemble,
                                const PValueSeries& pvalues,
                                const StudyConfig& config,
                                const std::string& path) {
  json j;
  j["config_hash"] = config.config_hash;
  j["seed"] = config.seed;
  j["generated_at"] = utc_now();
  j["study"] = study_json(config);
  j["treated"] = {{"att", ensemble.treated.att},
                  {"pre_rmspe", ensemble.treated.pre_rmspe},
                  {"end_of_sample_delta", ensemble.treated.end_of_sample_delta}};
  int included = 0;
  json placebos = json::array();
  for (const auto& p : ensemble.placebos) {
    if (!p.excluded) ++included;
    placebos.push_back({{"unit", p.unit},
                        {"excluded", p.excluded},
                        {"reason", p.exclusion_reason},
                        {"pre_rmspe", p.pre_rmspe},
                        {"att", p.att}});
  }
  j["placebos"] = placebos;
  j["included"] = included;
  j["end_of_sample_p"] = pvalues.end_of_sample.p;
  j["end_of_sample_counts"] = {{"numerator", pvalues.end_of_sample.numerator},
                               {"denominator", pvalues.end_of_sample.denominator}};
  dump_json(j, path);
}

void write_robustness_report_json(const RobustnessReport& report,
                                  const SyntheticControlFit& baseline,
                                  const std::string& path) {
  json j;
  j["label"] = report.label;
  j["feasible"] = report.feasible;
  if (!report.feasible) j["message"] = report.message;
  if (report.fit) {
    j["att"] = report.fit->att;
    j["pre_rmspe"] = report.fit->pre_rmspe;
    j["end_of_sample_delta"] = report.fit->end_of_sample_delta;
    j["att_delta"] = report.att_delta(baseline);
    j["end_delta_difference"] = report.end_delta_difference(baseline);
    j["weight_l1_distance"] = report.weight_l1_distance(baseline);
    j["weights"] = weights_json(*report.fit);
  }
  dump_json(j, path);
}

void write_robustness_ranking_csv(const std::vector<RobustnessReport>& reports,
                                  const SyntheticControlFit& baseline,
                                  const std::string& path) {
  auto out = open_out(path);
  out << "variant,feasible,att_delta,end_delta_difference,weight_l1_distance\n";
  for (const auto& r : reports) {
    out << r.label << ',' << (r.feasible ? 1 : 0) << ',';
    if (r.fit)
      out << format_double(r.att_delta(baseline)) << ','
          << format_double(r.end_delta_difference(baseline)) << ','
          << format_double(r.weight_l1_distance(baseline));
    else
      out << ",,";
    out << '\n';
  }
}

void write_paths_svg(const SyntheticControlFit& fit, const StudySpec& spec,
                     const std::string& path) {
  const double width = 720, height = 480;
  const double left = 70, right = 20, top = 30, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [p, v] : fit.observed_path) {
    lo = std::min({lo, v, fit.synthetic_path.at(p)});
    hi = std::max({hi, v, fit.synthetic_path.at(p)});
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const int p0 = fit.observed_path.begin()->first;
  const int p1 = fit.observed_path.rbegin()->first;
  auto sx = [&](double period) {
    return left + (p1 > p0 ? (period - p0) / (p1 - p0) : 0.5) * plot_w;
  };
  auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };
  auto coord = [&](double v) {
    // Fixed two-decimal pixel coordinates keep the file byte-stable.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  auto polyline = [&](const Series& series) {
    std::string pts;
    for (const auto& [p, v] : series)
      pts += coord(sx(p)) + "," + coord(sy(v)) + " ";
    if (!pts.empty()) pts.pop_back();
    return pts;
  };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  out << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "  <g font-family=\"sans-serif\" font-size=\"12\">\n";

  for (int tick = 0; tick <= 5; ++tick) {
    const double v = lo + (hi - lo) * tick / 5.0;
    const double y = sy(v);
    out << "    <line x1=\"" << coord(left) << "\" y1=\"" << coord(y)
        << "\" x2=\"" << coord(width - right) << "\" y2=\"" << coord(y)
        << "\" stroke=\"#dddddd\"/>\n";
    out << "    <text x=\"" << coord(left - 8) << "\" y=\"" << coord(y + 4)
        << "\" text-anchor=\"end\">" << format_double(std::round(v * 100) / 100)
        << "</text>\n";
  }
  const int step = std::max(1, (p1 - p0) / 8);
  for (int p = p0; p <= p1; p += step) {
    out << "    <text x=\"" << coord(sx(p)) << "\" y=\""
        << coord(height - bottom + 20) << "\" text-anchor=\"middle\">" << p
        << "</text>\n";
  }

  out << "    <line x1=\"" << coord(sx(spec.treatment_period)) << "\" y1=\""
      << coord(top) << "\" x2=\"" << coord(sx(spec.treatment_period))
      << "\" y2=\"" << coord(height - bottom)
      << "\" stroke=\"#888888\" stroke-dasharray=\"6,4\"/>\n";

  out << "    <polyline fill=\"none\" stroke=\"#1f3d7a\" stroke-width=\"2\" "
         "points=\""
      << polyline(fit.observed_path) << "\"/>\n";
  out << "    <polyline fill=\"none\" stroke=\"#b03a2e\" stroke-width=\"2\" "
         "stroke-dasharray=\"8,4\" points=\""
      << polyline(fit.synthetic_path) << "\"/>\n";

  out << "    <text x=\"" << coord(left + 10) << "\" y=\"" << coord(top + 16)
      << "\" fill=\"#1f3d7a\">observed " << spec.outcome << " ("
      << spec.treated_unit << ")</text>\n";
  out << "    <text x=\"" << coord(left + 10) << "\" y=\"" << coord(top + 34)
      << "\" fill=\"#b03a2e\">synthetic control</text>\n";
  out << "  </g>\n</svg>\n";
}

}  // namespace scmkit
