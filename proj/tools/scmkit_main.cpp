#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "scmkit/config.hpp"
#include "scmkit/errors.hpp"
#include "scmkit/inference.hpp"
#include "scmkit/panel.hpp"
#include "scmkit/report.hpp"
#include "scmkit/robustness.hpp"
#include "scmkit/scm.hpp"
#include "scmkit/text.hpp"

namespace {

using namespace scmkit;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool loose_feasibility = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--jobs", args.jobs, "parallel fits (0 = all cores)");
  cmd->add_flag("--loose-feasibility", args.loose_feasibility,
                "relax the solver stopping tolerance to a 5% KKT margin");
}

StudyConfig load_with_overrides(const CommonArgs& args) {
  StudyConfig config = load_study_config(args.config_path);
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (args.seed) config.seed = *args.seed;
  if (args.jobs) config.jobs = *args.jobs;
  return config;
}

FitOptions fit_options(const CommonArgs& args) {
  FitOptions options;
  options.loose_feasibility = args.loose_feasibility;
  return options;
}

int run_validate(const CommonArgs& args) {
  const StudyConfig config = load_with_overrides(args);
  const PanelDataset data = load_config_panel(config);
  const ValidationReport report = validate_study(data, config.study);
  for (const auto& violation : report.violations)
    std::cout << "violation: " << violation.message << "\n";
  std::cout << report.violations.size() << " violations\n";
  return report.ok() ? 0 : 1;
}

int run_fit(const CommonArgs& args) {
  const StudyConfig config = load_with_overrides(args);
  const PanelDataset data = load_config_panel(config);
  const SyntheticControlFit fit =
      fit_synthetic_control(data, config.study, std::nullopt,
                            fit_options(args));
  ensure_out_dir(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  write_weights_csv(fit, (out / "weights.csv").string());
  write_gaps_csv(fit, (out / "gaps.csv").string());
  write_fit_summary_json(fit, config, (out / "summary.json").string());
  if (config.emit_plot)
    write_paths_svg(fit, config.study, (out / "paths.svg").string());
  for (const auto& warning : fit.warnings)
    std::cerr << "warning: " << warning << "\n";
  std::cout << "att=" << format_double(fit.att)
            << " pre_rmspe=" << format_double(fit.pre_rmspe)
            << " end_of_sample_delta="
            << format_double(fit.end_of_sample_delta) << "\n";
  return 0;
}

int run_placebo(const CommonArgs& args) {
  const StudyConfig config = load_with_overrides(args);
  const PanelDataset data = load_config_panel(config);
  PlaceboOptions options;
  options.fit = fit_options(args);
  options.jobs = config.jobs;
  const PlaceboEnsemble ensemble =
      run_in_space_placebos(data, config.study, options);
  const PValueSeries pvalues =
      empirical_p_values(ensemble, config.study.inference);
  ensure_out_dir(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  write_pvalues_csv(pvalues, (out / "pvalues.csv").string());
  write_placebo_gaps_csv(ensemble, (out / "placebo_gaps.csv").string());
  write_exclusions_csv(ensemble, (out / "exclusions.csv").string());
  write_placebo_summary_json(ensemble, pvalues, config,
                             (out / "placebo_summary.json").string());
  for (const auto& placebo : ensemble.placebos)
    if (placebo.excluded)
      std::cout << "excluded " << placebo.unit << ": "
                << placebo.exclusion_reason << "\n";
  std::cout << "end_of_sample_p=" << format_double(pvalues.end_of_sample.p)
            << " (" << pvalues.end_of_sample.numerator << "/"
            << pvalues.end_of_sample.denominator << ")\n";
  return 0;
}

int run_robustness(const CommonArgs& args) {
  const StudyConfig config = load_with_overrides(args);
  const PanelDataset data = load_config_panel(config);
  RobustnessOptions options;
  options.fit = fit_options(args);
  options.freeze_v = config.robustness.freeze_v;
  options.jobs = config.jobs;

  const SyntheticControlFit baseline =
      fit_synthetic_control(data, config.study, std::nullopt, options.fit);

  std::vector<RobustnessReport> reports;
  if (config.robustness.leave_one_out) {
    auto loo = leave_one_out(data, config.study, baseline, options);
    for (auto& r : loo) reports.push_back(std::move(r));
  }
  for (const int period : config.robustness.in_time_placebos) {
    try {
      reports.push_back(
          in_time_placebo(data, config.study, period, baseline, options));
    } catch (const ConfigError& e) {
      RobustnessReport infeasible;
      infeasible.label = "in-time:" + std::to_string(period);
      infeasible.feasible = false;
      infeasible.message = e.what();
      reports.push_back(std::move(infeasible));
    }
  }
  for (const auto& pool : config.robustness.restricted_pools) {
    try {
      reports.push_back(restricted_pool(data, config.study, pool.keep,
                                        baseline, options, pool.label));
    } catch (const ConfigError& e) {
      RobustnessReport infeasible;
      infeasible.label = pool.label.empty() ? "pool" : pool.label;
      infeasible.feasible = false;
      infeasible.message = e.what();
      reports.push_back(std::move(infeasible));
    }
  }

  std::stable_sort(reports.begin(), reports.end(),
                   [&](const RobustnessReport& a, const RobustnessReport& b) {
                     if (a.feasible != b.feasible) return a.feasible;
                     return std::abs(a.att_delta(baseline)) >
                            std::abs(b.att_delta(baseline));
                   });

  ensure_out_dir(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  for (const auto& report : reports)
    write_robustness_report_json(
        report, baseline,
        (out / (sanitize_label(report.label) + ".json")).string());
  write_robustness_ranking_csv(reports, baseline,
                               (out / "robustness_ranking.csv").string());
  for (const auto& report : reports) {
    std::cout << report.label << ": ";
    if (report.feasible)
      std::cout << "att_delta=" << format_double(report.att_delta(baseline))
                << "\n";
    else
      std::cout << "infeasible (" << report.message << ")\n";
  }
  return 0;
}

int run_simulate(const CommonArgs& args) {
  SimConfig config = load_sim_config(args.config_path);
  if (args.seed) config.gen.seed = *args.seed;
  const FactorModelSpec spec = random_factor_model_spec(config.gen);
  const PanelDataset data = simulate_factor_model(spec);
  const std::string out_dir = args.out_dir.empty() ? "out" : args.out_dir;
  ensure_out_dir(out_dir);
  const auto path = std::filesystem::path(out_dir) / "panel.csv";
  write_panel_csv(data, path.string());
  std::cout << "wrote " << path.string() << " (" << data.units().size()
            << " units, " << data.periods().size() << " periods)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic control estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs validate_args, fit_args, placebo_args, robustness_args,
      simulate_args;
  add_common(app.add_subcommand("validate",
                                "check a study config against its panel"),
             validate_args);
  add_common(app.add_subcommand("fit", "fit the synthetic control"), fit_args);
  add_common(app.add_subcommand("placebo", "in-space placebo inference"),
             placebo_args);
  add_common(app.add_subcommand("robustness", "robustness battery"),
             robustness_args);
  add_common(app.add_subcommand("simulate",
                                "generate a factor-model panel CSV"),
             simulate_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("validate")) return run_validate(validate_args);
    if (app.got_subcommand("fit")) return run_fit(fit_args);
    if (app.got_subcommand("placebo")) return run_placebo(placebo_args);
    if (app.got_subcommand("robustness")) return run_robustness(robustness_args);
    if (app.got_subcommand("simulate")) return run_simulate(simulate_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PanelError& e) {
    std::cerr << "panel error: " << e.what() << "\n";
    return 2;
  } catch (const InferenceError& e) {
    std::cerr << "inference error: " << e.what() << "\n";
    return 1;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
