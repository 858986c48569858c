#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cds/data.hpp"
#include "cds/encoder.hpp"
#include "cds/memory.hpp"

namespace cds {

/// Which self-supervised objective drives the encoder.
enum class Objective {
  cds,        // in-domain instance discrimination + cross-domain matching
  in_domain,  // in-domain instance discrimination only
  union_id,   // instance discrimination over one bank spanning both domains
};

std::string_view to_string(Objective o);
Objective objective_from_string(std::string_view s);

struct TrainConfig {
  double tau = 0.05;
  double eta = 0.5;
  double lr = 0.003;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_source = 32;
  std::size_t batch_target = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  std::size_t feature_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};
  Objective objective = Objective::cds;
  bool renormalize_bank = true;

  void validate() const;
};

/// Per-epoch means of the batch losses. For the union_id objective the
/// loss_wins column holds the union instance-discrimination loss; loss_cdm
/// is always the cross-domain entropy, optimized or not.
struct EpochLog {
  int epoch = 0;
  double loss_wins = 0.0;
  double loss_cdm = 0.0;
  double loss_cds = 0.0;
  std::optional<double> knn_acc;
  double seconds = 0.0;
};

/// Runs on a frozen model between epochs; returns e.g. a kNN accuracy.
using EvalHook = std::function<double(const EncoderModel&)>;

/// Everything needed to continue training bit-exactly.
struct PretrainState {
  EncoderModel model;
  OptimizerState optimizer;
  BankPair banks;
  int epochs_done = 0;
};

struct PretrainResult {
  PretrainState state;
  std::vector<EpochLog> logs;
};

/// Fresh encoder from the config seed, banks from a full forward pass, then
/// `epochs` epochs of paired source/target batches.
PretrainResult run_pretrain(const TrainConfig& config, const DatasetSplit& split, const EvalHook& hook = {});
PretrainResult run_pretrain(const TrainConfig& config, const UnlabeledView& view, const EvalHook& hook = {});

/// Continues from a saved state up to config.epochs total epochs.
PretrainResult resume_pretrain(const TrainConfig& config, const UnlabeledView& view, PretrainState state,
                               const EvalHook& hook = {});

/// Initial encoder for a config and input width (what run_pretrain starts from).
EncoderModel initial_encoder(const TrainConfig& config, std::size_t input_dim);

/// Optimizer steps per epoch: max over domains of ceil(N / batch).
std::size_t steps_per_epoch(std::size_t n_source, std::size_t n_target, std::size_t batch_source,
                            std::size_t batch_target);

std::string epoch_logs_to_csv(const std::vector<EpochLog>& logs);

/// Writes model.json, optimizer.json, source_bank.csv, target_bank.csv and
/// state.json (epochs completed) into dir.
void save_pretrain_state(const PretrainState& state, const std::filesystem::path& dir);
PretrainState load_pretrain_state(const std::filesystem::path& dir);

}  // namespace cds
