#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cds/data.hpp"
#include "cds/encoder.hpp"
#include "cds/numerics.hpp"
#include "cds/pretrain.hpp"

namespace cds::eval {

/// The only holder of the SealedLabels key. Anything that reports accuracy
/// against withheld labels goes through here.
class LabelOracle {
 public:
  /// All source labels (visible D_s and sealed D_su) indexed by source index.
  static std::vector<int> source_labels(const DatasetSplit& split);
  /// Target ground truth indexed by target index.
  static std::vector<int> target_labels(const DatasetSplit& split);
  /// Ground truth of D_su, aligned with split.unlabeled_source().
  static std::vector<int> unlabeled_source_labels(const DatasetSplit& split);
};

/// exp(sim / tau)-weighted vote among the k most similar references. Neighbor
/// ties go to the lower reference index, class ties to the lower class id.
std::vector<int> weighted_knn(const Matrix& reference, std::span<const int> reference_labels,
                              const Matrix& queries, std::size_t k, double tau_knn);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct ProbeConfig {
  double lr = 0.5;
  int max_iterations = 5000;
  double tolerance = 1e-7;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression trained by full-batch gradient descent.
class LinearClassifier {
 public:
  static LinearClassifier train(const Matrix& features, std::span<const int> labels, int num_classes,
                                const ProbeConfig& cfg);

  Distribution predict_proba(std::span<const double> f) const;
  int predict(std::span<const double> f) const;
  int iterations() const noexcept { return iterations_; }

 private:
  Matrix weight_;
  Vec bias_;
  int iterations_ = 0;
};

/// Accuracy on queries of a linear classifier fit on reference features.
double linear_probe(const Matrix& reference, std::span<const int> reference_labels, const Matrix& queries,
                    std::span<const int> query_labels, const ProbeConfig& cfg);

struct RetrievalRow {
  std::size_t query_index = 0;
  std::size_t rank = 0;
  std::size_t neighbor_index = 0;
  double similarity = 0.0;
  bool match = false;
};

/// Fraction of (target query, top-k source neighbor) pairs that share a class.
double retrieval_precision(const Matrix& source, std::span<const int> source_labels, const Matrix& target,
                           std::span<const int> target_labels, std::size_t k,
                           std::vector<RetrievalRow>* dump = nullptr);

std::string retrieval_rows_to_csv(const std::vector<RetrievalRow>& rows);

/// Held-out (20%) binary cross-entropy of a linear source-vs-target
/// classifier. Clamped to ln 2 when worse than predicting 1/2.
double confusion_loss(const Matrix& source, const Matrix& target, const ProbeConfig& cfg);

struct EvalConfig {
  std::size_t k = 20;
  double tau_knn = 0.05;
  std::size_t retrieval_k = 5;
  ProbeConfig probe;
};

struct EvalReport {
  double knn_accuracy = 0.0;
  double linear_accuracy = 0.0;
  double retrieval_precision_at_k = 0.0;
  double confusion_loss = 0.0;
  std::size_t k = 0;
  double tau_knn = 0.0;
  std::size_t retrieval_k = 0;
  std::uint64_t seed = 0;
};

/// kNN, linear probe and retrieval use source features as references and
/// target features as queries; confusion is measured between the two sets.
EvalReport evaluate_features(const Matrix& source, std::span<const int> source_labels, const Matrix& target,
                             std::span<const int> target_labels, const EvalConfig& cfg,
                             std::vector<RetrievalRow>* dump = nullptr);

EvalReport evaluate_model(const EncoderModel& model, const DatasetSplit& split, const EvalConfig& cfg,
                          std::vector<RetrievalRow>* dump = nullptr);

/// Target weighted-kNN accuracy of a model, for per-epoch pretrain logging.
EvalHook knn_hook(const DatasetSplit& split, const EvalConfig& cfg);

std::string report_to_json(const EvalReport& report, const std::string& config_echo = "");

}  // namespace cds::eval
