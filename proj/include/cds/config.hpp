#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cds/adapt.hpp"
#include "cds/data.hpp"
#include "cds/eval.hpp"
#include "cds/pretrain.hpp"

namespace cds {

struct DataSource {
  std::optional<GeneratorConfig> generator;
  // Used when no generator is given: files as written by gen-data.
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
  std::filesystem::path split_json;
};

struct PretrainSection {
  TrainConfig train;
  std::optional<std::filesystem::path> resume_from;  // directory holding a saved pretrain state
  bool log_knn = true;
};

struct AdaptSection {
  AdaptConfig adapt;
  std::optional<std::filesystem::path> model;  // encoder to adapt; fresh encoder when absent
};

struct EvalSection {
  eval::EvalConfig eval;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> source_features;  // raw feature CSVs instead of a model
  std::optional<std::filesystem::path> target_features;
  bool dump_retrieval = false;
};

/// One JSON document describing a whole experiment. Unknown keys are
/// rejected at parse time.
struct ExperimentConfig {
  DataSource data;
  SplitConfig split;
  PretrainSection pretrain;
  AdaptSection adapt;
  EvalSection eval;
  std::filesystem::path output_dir = "out";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  /// Points every component seed (data, split, pretrain, adapt, probe) at s.
  void apply_seed(std::uint64_t s);
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config, defaults included, as pretty JSON.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace cds
