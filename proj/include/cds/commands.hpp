#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cds/config.hpp"
#include "cds/error.hpp"

namespace cds::cli {

/// 2 config error, 3 I/O error, 4 numeric failure.
int exit_code_for(ErrorCode code);

/// Builds the split described by the config: generated, or loaded from
/// source.csv / target.csv / split.json.
DatasetSplit load_split(const ExperimentConfig& cfg);

void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_adapt(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out);

enum class Arm { no_pretrain, union_id, in_domain, cds };
std::string_view to_string(Arm arm);
inline constexpr Arm kArms[] = {Arm::no_pretrain, Arm::union_id, Arm::in_domain, Arm::cds};

struct PipelineRow {
  Arm arm = Arm::cds;
  std::optional<std::uint64_t> seed;  // empty for the per-arm median row
  double knn_acc = 0.0;
  double linear_acc = 0.0;
  double retrieval_precision = 0.0;
  double confusion_loss = 0.0;
  double adapt_target_acc = 0.0;
};

/// Runs every arm for every seed, then appends one median row per arm.
std::vector<PipelineRow> cmd_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out);

std::string pipeline_rows_to_csv(const std::vector<PipelineRow>& rows);

double median(std::vector<double> values);

}  // namespace cds::cli
