#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scmkit/panel.hpp"
#include "scmkit/scm.hpp"
#include "scmkit/transforms.hpp"

namespace scmkit {

struct CompositeConfig {
  std::string outcome_name;
  CompositeSpec spec;
};

struct RestrictedPoolConfig {
  std::string label;
  std::vector<std::string> keep;
};

struct RobustnessConfig {
  bool leave_one_out = false;
  std::vector<int> in_time_placebos;
  std::vector<RestrictedPoolConfig> restricted_pools;
  bool freeze_v = false;
};

/// Everything a CLI run needs: panel file(s), the study spec, derived
/// composite outcomes, robustness variants and run parameters.
struct StudyConfig {
  std::vector<std::string> panel_paths;
  CsvSchema csv_schema;
  StudySpec study;
  std::vector<CompositeConfig> composites;
  RobustnessConfig robustness;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int jobs = 0;
  bool emit_plot = true;
  std::string config_hash;  // filled by the loader
};

StudyConfig load_study_config(const std::string& path);

/// Loads and merges the panel files, then derives configured composites.
PanelDataset load_config_panel(const StudyConfig& config);

/// Simulator run description for `scmkit simulate`.
struct SimConfig {
  FactorModelGenOptions gen;
  std::string config_hash;
};

SimConfig load_sim_config(const std::string& path);

/// FNV-1a 64-bit hash of a file's bytes, as "fnv1a64:<hex>".
std::string file_hash(const std::string& path);

}  // namespace scmkit
