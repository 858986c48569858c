#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cds/numerics.hpp"

namespace cds {

enum class Domain { source, target };

std::string_view to_string(Domain d);
Domain domain_from_string(std::string_view s);

inline constexpr int kUnlabeled = -1;

struct Sample {
  Vec x;
  int label = kUnlabeled;  // -1 when unknown or withheld
  Domain domain = Domain::source;
  std::size_t index = 0;   // identity within its domain, contiguous from 0
};

/// Input vectors without any labels, in bank order (row i = sample index i).
struct UnlabeledView {
  Matrix source;  // D_s and D_su interleaved by source index
  Matrix target;
};

namespace eval {
class LabelOracle;
}

/// Ground truth of the unlabeled splits. Only the evaluation oracle can read
/// it; training code has no way to name the accessor key.
class SealedLabels {
 public:
  class Key {
    friend class eval::LabelOracle;
    Key() = default;
  };

  SealedLabels() = default;
  SealedLabels(std::vector<int> unlabeled_source, std::vector<int> target)
      : unlabeled_source_(std::move(unlabeled_source)), target_(std::move(target)) {}

  std::span<const int> unlabeled_source(Key) const { return unlabeled_source_; }
  std::span<const int> target(Key) const { return target_; }

 private:
  std::vector<int> unlabeled_source_;  // aligned with DatasetSplit::unlabeled_source
  std::vector<int> target_;            // aligned with DatasetSplit::unlabeled_target
};

/// D_s (labeled source), D_su (unlabeled source) and D_tu (unlabeled target).
/// Samples in the unlabeled lists always carry label -1; their ground truth
/// lives in the sealed side channel.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(std::vector<Sample> labeled_source, std::vector<Sample> unlabeled_source,
               std::vector<Sample> unlabeled_target, int num_classes, SealedLabels sealed);

  const std::vector<Sample>& labeled_source() const noexcept { return labeled_source_; }
  const std::vector<Sample>& unlabeled_source() const noexcept { return unlabeled_source_; }
  const std::vector<Sample>& unlabeled_target() const noexcept { return unlabeled_target_; }
  int num_classes() const noexcept { return num_classes_; }
  const SealedLabels& sealed() const noexcept { return sealed_; }

  std::size_t source_count() const noexcept { return labeled_source_.size() + unlabeled_source_.size(); }
  std::size_t target_count() const noexcept { return unlabeled_target_.size(); }
  std::size_t input_dim() const;

  /// Inputs of both domains in index order, with no label information.
  UnlabeledView unlabeled_view() const;

  /// Copy with every label (visible and sealed) replaced by -1.
  DatasetSplit without_labels() const;

 private:
  std::vector<Sample> labeled_source_;
  std::vector<Sample> unlabeled_source_;
  std::vector<Sample> unlabeled_target_;
  int num_classes_ = 0;
  SealedLabels sealed_;
};

struct ShiftSpec {
  double rotation_angle = 0.5235987755982988;  // 30 degrees
  Vec translation = {2.0, 0.0};
  double scale = 1.0;
  double noise_sigma = 0.1;
};

struct GeneratorConfig {
  int num_classes = 3;
  int per_class_count = 50;
  std::size_t input_dim = 2;
  double cluster_sigma = 0.5;
  ShiftSpec shift;
  std::uint64_t seed = 0;
};

struct TwoDomainData {
  std::vector<Sample> source;  // fully labeled
  std::vector<Sample> target;  // fully labeled (ground truth)
  int num_classes = 0;
};

/// Gaussian class clusters on a circle of radius 4 (first two coordinates);
/// the target is the same mixture pushed through scale * R(angle) * x + t
/// plus isotropic noise.
TwoDomainData generate_two_domain(const GeneratorConfig& cfg);

struct SplitConfig {
  std::optional<int> shots_per_class;
  std::optional<double> label_fraction;
  std::uint64_t seed = 0;
};

struct SourcePartition {
  std::vector<Sample> labeled;    // D_s, labels kept
  std::vector<Sample> unlabeled;  // D_su, labels stripped
  std::vector<int> unlabeled_truth;
};

/// Per class, draws `shots` (or ceil(fraction * count), at least one) samples
/// without replacement into D_s.
SourcePartition split_few_shot(const std::vector<Sample>& source, int num_classes, const SplitConfig& cfg);

/// Assembles a DatasetSplit from generated/loaded data and a partition.
DatasetSplit make_split(const TwoDomainData& data, const SourcePartition& part);

/// Convenience: split the source and assemble.
DatasetSplit make_split(const TwoDomainData& data, const SplitConfig& cfg);

/// CSV with header `domain,index,label,dim0,...`; label -1 = unlabeled.
std::string samples_to_csv(const std::vector<Sample>& samples, std::size_t dim);
std::vector<Sample> samples_from_csv(std::string_view text);
void save_feature_csv(const std::filesystem::path& path, const std::vector<Sample>& samples, std::size_t dim);
std::vector<Sample> load_feature_csv(const std::filesystem::path& path);

/// `{"num_classes": K, "labeled": {"0": [...], ...}}` listing D_s indices per class.
std::string split_to_json(const SourcePartition& part, int num_classes);
/// Rebuilds a partition from a labeled index list and fully labeled source samples.
SourcePartition partition_from_json(const std::string& text, const std::vector<Sample>& source);

}  // namespace cds
