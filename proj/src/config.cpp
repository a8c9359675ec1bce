#include "scmkit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scmkit/errors.hpp"

namespace scmkit {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_required(const json& obj, const std::string& where,
               const std::string& key) {
  if (!obj.contains(key))
    throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": bad value for '" + key + "'");
  }
}

PredictorDef parse_predictor(const json& obj, const std::string& where) {
  require_keys(obj, where, {"kind", "name", "period", "from", "to"});
  PredictorDef def;
  const auto kind = get_required<std::string>(obj, where, "kind");
  if (kind == "covariate")
    def.kind = PredictorKind::Covariate;
  else if (kind == "outcome-lag")
    def.kind = PredictorKind::OutcomeLag;
  else if (kind == "outcome-mean")
    def.kind = PredictorKind::OutcomeMean;
  else
    throw ConfigError(where + ": unknown predictor kind '" + kind + "'");
  def.name = get_required<std::string>(obj, where, "name");
  if (obj.contains("period")) def.period = get_required<int>(obj, where, "period");
  if (obj.contains("from")) def.from = get_required<int>(obj, where, "from");
  if (obj.contains("to")) def.to = get_required<int>(obj, where, "to");
  if (def.kind == PredictorKind::OutcomeLag && !def.period)
    throw ConfigError(where + ": outcome-lag predictor needs 'period'");
  if (def.kind == PredictorKind::OutcomeMean && (!def.from || !def.to))
    throw ConfigError(where + ": outcome-mean predictor needs 'from'/'to'");
  return def;
}

InferenceSettings parse_inference(const json& obj, const std::string& where) {
  require_keys(obj, where,
               {"mspe_inclusion_ratio", "mspe_discard_ratio", "sidedness",
                "include_treated_in_denominator"});
  InferenceSettings out;
  auto ratio = [&](const std::string& key,
                   std::optional<double> fallback) -> std::optional<double> {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (v.is_boolean()) {
      if (!v.get<bool>()) return std::nullopt;  // false disables the filter
      throw ConfigError(where + ": '" + key + "' must be a ratio or false");
    }
    if (v.is_null()) return std::nullopt;
    if (!v.is_number())
      throw ConfigError(where + ": bad value for '" + key + "'");
    return v.get<double>();
  };
  out.mspe_inclusion_ratio = ratio("mspe_inclusion_ratio", 1.0);
  out.mspe_discard_ratio = ratio("mspe_discard_ratio", 4.0);
  const auto sidedness =
      get_or<std::string>(obj, where, "sidedness", "two-sided-absolute");
  if (sidedness == "two-sided-absolute")
    out.sidedness = Sidedness::TwoSidedAbsolute;
  else if (sidedness == "one-sided-signed")
    out.sidedness = Sidedness::OneSidedSigned;
  else
    throw ConfigError(where + ": unknown sidedness '" + sidedness + "'");
  out.include_treated_in_denominator =
      get_or<bool>(obj, where, "include_treated_in_denominator", false);
  return out;
}

StudySpec parse_study(const json& obj) {
  const std::string where = "study";
  require_keys(obj, where,
               {"treated_unit", "donor_units", "excluded_units", "outcome",
                "t_start", "training_end", "treatment_period", "t_end",
                "predictors", "inference"});
  StudySpec spec;
  spec.treated_unit = get_required<std::string>(obj, where, "treated_unit");
  spec.donor_units =
      get_required<std::vector<std::string>>(obj, where, "donor_units");
  if (obj.contains("excluded_units")) {
    for (const auto& e : obj.at("excluded_units")) {
      if (e.is_string()) {
        spec.excluded_units.push_back({e.get<std::string>(), "excluded"});
      } else {
        require_keys(e, where + ".excluded_units", {"unit", "reason"});
        spec.excluded_units.push_back(
            {get_required<std::string>(e, where, "unit"),
             get_or<std::string>(e, where, "reason", "excluded")});
      }
    }
  }
  spec.outcome = get_required<std::string>(obj, where, "outcome");
  spec.t_start = get_required<int>(obj, where, "t_start");
  spec.training_end = get_required<int>(obj, where, "training_end");
  spec.treatment_period = get_required<int>(obj, where, "treatment_period");
  spec.t_end = get_required<int>(obj, where, "t_end");
  if (!obj.contains("predictors") || !obj.at("predictors").is_array() ||
      obj.at("predictors").empty())
    throw ConfigError(where + ": 'predictors' must be a nonempty array");
  int i = 0;
  for (const auto& p : obj.at("predictors"))
    spec.predictors.push_back(
        parse_predictor(p, where + ".predictors[" + std::to_string(i++) + "]"));
  if (obj.contains("inference"))
    spec.inference = parse_inference(obj.at("inference"), where + ".inference");
  return spec;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::string file_hash(const std::string& path) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << fnv1a64(read_file(path));
  return os.str();
}

StudyConfig load_study_config(const std::string& path) {
  const json root = parse_file(path);
  require_keys(root, "config",
               {"panel", "csv_schema", "study", "composites", "robustness",
                "out_dir", "seed", "jobs", "emit_plot"});

  StudyConfig config;
  if (!root.contains("panel"))
    throw ConfigError("config: missing key 'panel'");
  if (root.at("panel").is_string())
    config.panel_paths.push_back(root.at("panel").get<std::string>());
  else
    config.panel_paths =
        root.at("panel").get<std::vector<std::string>>();
  if (config.panel_paths.empty())
    throw ConfigError("config: 'panel' lists no files");

  if (root.contains("csv_schema")) {
    const auto& s = root.at("csv_schema");
    require_keys(s, "csv_schema", {"unit", "period", "variable", "value"});
    config.csv_schema.unit_column = get_or<std::string>(s, "csv_schema", "unit", "unit");
    config.csv_schema.period_column =
        get_or<std::string>(s, "csv_schema", "period", "period");
    config.csv_schema.variable_column =
        get_or<std::string>(s, "csv_schema", "variable", "variable");
    config.csv_schema.value_column =
        get_or<std::string>(s, "csv_schema", "value", "value");
  }

  if (!root.contains("study"))
    throw ConfigError("config: missing key 'study'");
  config.study = parse_study(root.at("study"));

  if (root.contains("composites")) {
    int i = 0;
    for (const auto& c : root.at("composites")) {
      const std::string where = "composites[" + std::to_string(i++) + "]";
      require_keys(c, where,
                   {"outcome", "indicators", "from", "to", "sign_anchor"});
      CompositeConfig cc;
      cc.outcome_name = get_required<std::string>(c, where, "outcome");
      cc.spec.indicators =
          get_required<std::vector<std::string>>(c, where, "indicators");
      cc.spec.from = get_required<int>(c, where, "from");
      cc.spec.to = get_required<int>(c, where, "to");
      cc.spec.sign_anchor = get_or<std::string>(c, where, "sign_anchor", "");
      config.composites.push_back(std::move(cc));
    }
  }

  if (root.contains("robustness")) {
    const auto& r = root.at("robustness");
    require_keys(r, "robustness",
                 {"leave_one_out", "in_time_placebos", "restricted_pools",
                  "freeze_v"});
    config.robustness.leave_one_out =
        get_or<bool>(r, "robustness", "leave_one_out", false);
    config.robustness.in_time_placebos =
        get_or<std::vector<int>>(r, "robustness", "in_time_placebos", {});
    config.robustness.freeze_v = get_or<bool>(r, "robustness", "freeze_v", false);
    if (r.contains("restricted_pools")) {
      int i = 0;
      for (const auto& p : r.at("restricted_pools")) {
        const std::string where =
            "robustness.restricted_pools[" + std::to_string(i++) + "]";
        require_keys(p, where, {"label", "keep"});
        RestrictedPoolConfig rp;
        rp.label = get_or<std::string>(p, where, "label", "");
        rp.keep = get_required<std::vector<std::string>>(p, where, "keep");
        config.robustness.restricted_pools.push_back(std::move(rp));
      }
    }
  }

  config.out_dir = get_or<std::string>(root, "config", "out_dir", "out");
  config.seed = get_or<std::uint64_t>(root, "config", "seed", 0);
  config.jobs = get_or<int>(root, "config", "jobs", 0);
  config.emit_plot = get_or<bool>(root, "config", "emit_plot", true);
  config.config_hash = file_hash(path);
  return config;
}

PanelDataset load_config_panel(const StudyConfig& config) {
  PanelDataset data = load_panel_csv(config.panel_paths.front(),
                                     config.csv_schema);
  for (std::size_t i = 1; i < config.panel_paths.size(); ++i)
    merge_panel(data, load_panel_csv(config.panel_paths[i], config.csv_schema));
  for (const auto& composite : config.composites) {
    const CompositeResult result = pca_first_component(data, composite.spec);
    store_composite(data, composite.outcome_name, result);
  }
  return data;
}

SimConfig load_sim_config(const std::string& path) {
  const json root = parse_file(path);
  require_keys(root, "sim-config",
               {"units", "periods", "first_period", "treatment_period",
                "covariates", "factors", "noise_scale", "delta",
                "treated_in_hull", "signal_scale", "seed"});
  SimConfig config;
  config.gen.n_units = get_required<int>(root, "sim-config", "units");
  config.gen.n_periods = get_required<int>(root, "sim-config", "periods");
  config.gen.first_period = get_or<int>(root, "sim-config", "first_period", 1);
  config.gen.treatment_period =
      get_required<int>(root, "sim-config", "treatment_period");
  config.gen.n_covariates = get_or<int>(root, "sim-config", "covariates", 2);
  config.gen.n_factors = get_or<int>(root, "sim-config", "factors", 2);
  config.gen.noise_scale = get_or<double>(root, "sim-config", "noise_scale", 0.0);
  config.gen.delta = get_or<double>(root, "sim-config", "delta", 0.0);
  config.gen.treated_in_hull =
      get_or<bool>(root, "sim-config", "treated_in_hull", true);
  config.gen.signal_scale = get_or<double>(root, "sim-config", "signal_scale", 1.0);
  config.gen.seed = get_or<std::uint64_t>(root, "sim-config", "seed", 0);
  if (config.gen.n_units < 2 || config.gen.n_periods < 2)
    throw ConfigError("sim-config: need at least 2 units and 2 periods");
  if (config.gen.treatment_period <= config.gen.first_period ||
      config.gen.treatment_period >=
          config.gen.first_period + config.gen.n_periods)
    throw ConfigError("sim-config: treatment_period outside the sample");
  config.config_hash = file_hash(path);
  return config;
}

}  // namespace scmkit
