#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cds/data.hpp"
#include "cds/encoder.hpp"
#include "cds/numerics.hpp"

namespace cds {

/// Linear classifier C on top of the normalized feature.
struct ClassifierHead {
  Matrix weight;  // num_classes x d
  Vec bias;       // num_classes

  static ClassifierHead initialize(int num_classes, std::size_t dim, std::uint64_t seed);
  int num_classes() const noexcept { return static_cast<int>(bias.size()); }

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

/// softmax(W f + b)
Distribution classifier_forward(const ClassifierHead& head, std::span<const double> f);

enum class DaMode { source_only, target_entmin };

std::string_view to_string(DaMode m);
DaMode da_mode_from_string(std::string_view s);

struct AdaptConfig {
  double lambda = 0.1;
  DaMode da_mode = DaMode::target_entmin;
  double target_entropy_weight = 0.1;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 50;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  std::size_t validation_per_class = 3;

  void validate() const;
};

struct LabeledBatch {
  Matrix inputs;
  std::vector<int> labels;
};

/// L = L_DA + lambda * L_su with
///   L_DA = mean CE on labeled source (+ w_t * mean entropy on target when target_entmin)
///   L_su = mean prediction entropy on unlabeled source.
/// Gradients cover the head and, unless frozen, the encoder.
struct AdaptLossReport {
  double total = 0.0;
  double loss_da = 0.0;
  double loss_su = 0.0;
  double source_ce = 0.0;
  double target_entropy = 0.0;
  Matrix head_weight_grad;
  Vec head_bias_grad;
  std::optional<ParamGrads> encoder_grads;
};

AdaptLossReport adapt_loss(const EncoderModel& model, const ClassifierHead& head, const LabeledBatch& labeled,
                           const Matrix& unlabeled_source, const Matrix& unlabeled_target, const AdaptConfig& config);

struct AdaptEpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_da = 0.0;
  double loss_su = 0.0;
  std::optional<double> src_unlabeled_acc;
  double target_acc = 0.0;
  double validation_acc = 0.0;
};

struct AdaptResult {
  EncoderModel model;
  ClassifierHead head;
  std::vector<AdaptEpochLog> logs;  // logs[0] is the untrained state (epoch 0)
  int best_epoch = 0;
  double best_target_acc = 0.0;
  bool validation_holdout = false;  // false: validation fell back to training accuracy
};

/// Early stopping picks the epoch with the highest validation accuracy
/// (earliest on ties) and reports target accuracy at that epoch.
AdaptResult run_adapt(const EncoderModel& model, const DatasetSplit& split, const AdaptConfig& config);

std::string adapt_logs_to_csv(const std::vector<AdaptEpochLog>& logs);

std::string head_to_json(const ClassifierHead& head);
ClassifierHead head_from_json(const std::string& text);

}  // namespace cds
