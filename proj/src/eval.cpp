#include "cds/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cds/error.hpp"
#include "cds/io.hpp"
#include "json.hpp"

namespace cds::eval {

std::vector<int> LabelOracle::source_labels(const DatasetSplit& split) {
  std::vector<int> labels(split.source_count(), kUnlabeled);
  for (const auto& s : split.labeled_source()) labels[s.index] = s.label;
  const auto sealed = split.sealed().unlabeled_source(SealedLabels::Key{});
  const auto& unl = split.unlabeled_source();
  for (std::size_t i = 0; i < unl.size() && i < sealed.size(); ++i) labels[unl[i].index] = sealed[i];
  return labels;
}

std::vector<int> LabelOracle::target_labels(const DatasetSplit& split) {
  std::vector<int> labels(split.target_count(), kUnlabeled);
  const auto sealed = split.sealed().target(SealedLabels::Key{});
  const auto& tgt = split.unlabeled_target();
  for (std::size_t i = 0; i < tgt.size() && i < sealed.size(); ++i) labels[tgt[i].index] = sealed[i];
  return labels;
}

std::vector<int> LabelOracle::unlabeled_source_labels(const DatasetSplit& split) {
  const auto sealed = split.sealed().unlabeled_source(SealedLabels::Key{});
  return {sealed.begin(), sealed.end()};
}

namespace {

void require_labels(std::span<const int> labels, const char* what) {
  for (int y : labels) {
    if (y < 0) throw Error(ErrorCode::EmptyReference, std::string(what) + " contain unknown (-1) labels");
  }
}

int class_count(std::span<const int> labels) {
  int top = -1;
  for (int y : labels) top = std::max(top, y);
  return top + 1;
}

// Indices of the k largest similarities; ties broken by lower index.
std::vector<std::size_t> top_k(const Vec& sims, std::size_t k) {
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  order.resize(k);
  return order;
}

Vec similarities(const Matrix& reference, std::span<const double> q) {
  Vec sims(reference.rows());
  for (std::size_t r = 0; r < reference.rows(); ++r) sims[r] = dot(reference.row(r), q);
  return sims;
}

}  // namespace

std::vector<int> weighted_knn(const Matrix& reference, std::span<const int> reference_labels,
                              const Matrix& queries, std::size_t k, double tau_knn) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "kNN reference set is empty");
  if (reference_labels.size() != reference.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "reference labels do not match reference rows");
  }
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (!(tau_knn > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau_knn must be positive");
  require_labels(reference_labels, "kNN references");
  if (!queries.empty() && queries.cols() != reference.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "query width differs from reference width");
  }
  const auto num_classes = static_cast<std::size_t>(class_count(reference_labels));
  std::vector<int> predicted(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const Vec sims = similarities(reference, queries.row(q));
    Vec votes(num_classes, 0.0);
    for (auto r : top_k(sims, k)) votes[static_cast<std::size_t>(reference_labels[r])] += std::exp(sims[r] / tau_knn);
    // max_element returns the first maximum, i.e. the lowest class id.
    predicted[q] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return predicted;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "prediction/label count mismatch");
  if (truth.empty()) throw Error(ErrorCode::EmptyReference, "accuracy over an empty set");
  require_labels(truth, "evaluation targets");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

LinearClassifier LinearClassifier::train(const Matrix& features, std::span<const int> labels, int num_classes,
                                         const ProbeConfig& cfg) {
  if (features.empty()) throw Error(ErrorCode::EmptyReference, "linear probe has no training features");
  if (labels.size() != features.rows()) throw Error(ErrorCode::DimensionMismatch, "label count mismatch");
  require_labels(labels, "probe training labels");
  if (num_classes < 1) throw Error(ErrorCode::InvalidConfig, "num_classes must be positive");
  const auto kc = static_cast<std::size_t>(num_classes);
  const std::size_t d = features.cols();
  const auto n = static_cast<double>(features.rows());

  LinearClassifier clf;
  clf.weight_ = Matrix(kc, d);
  clf.bias_.assign(kc, 0.0);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-0.01, 0.01);
  for (double& w : clf.weight_.data()) w = uni(rng);

  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iterations; ++it) {
    Matrix gw(kc, d);
    Vec gb(kc, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
      const auto f = features.row(i);
      Distribution p = clf.predict_proba(f);
      const auto y = static_cast<std::size_t>(labels[i]);
      loss -= std::log(std::max(p.probs[y], 1e-300));
      p.probs[y] -= 1.0;
      for (std::size_t c = 0; c < kc; ++c) {
        gb[c] += p.probs[c];
        auto row = gw.row(c);
        for (std::size_t j = 0; j < d; ++j) row[j] += p.probs[c] * f[j];
      }
    }
    double reg = 0.0;
    for (double w : clf.weight_.data()) reg += w * w;
    loss = loss / n + 0.5 * cfg.l2 * reg;
    clf.iterations_ = it + 1;
    if (std::abs(previous - loss) < cfg.tolerance) break;
    previous = loss;
    for (std::size_t c = 0; c < kc; ++c) {
      clf.bias_[c] -= cfg.lr * gb[c] / n;
      auto w = clf.weight_.row(c);
      const auto g = gw.row(c);
      for (std::size_t j = 0; j < d; ++j) w[j] -= cfg.lr * (g[j] / n + cfg.l2 * w[j]);
    }
  }
  return clf;
}

Distribution LinearClassifier::predict_proba(std::span<const double> f) const {
  Vec logits(bias_);
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += dot(weight_.row(c), f);
  return softmax_temp(logits, 1.0);
}

int LinearClassifier::predict(std::span<const double> f) const {
  const auto p = predict_proba(f);
  return static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
}

double linear_probe(const Matrix& reference, std::span<const int> reference_labels, const Matrix& queries,
                    std::span<const int> query_labels, const ProbeConfig& cfg) {
  if (queries.empty()) throw Error(ErrorCode::EmptyReference, "linear probe has no queries");
  const int kc = std::max(class_count(reference_labels), class_count(query_labels));
  const auto clf = LinearClassifier::train(reference, reference_labels, kc, cfg);
  std::vector<int> predicted(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) predicted[q] = clf.predict(queries.row(q));
  return accuracy(predicted, query_labels);
}

double retrieval_precision(const Matrix& source, std::span<const int> source_labels, const Matrix& target,
                           std::span<const int> target_labels, std::size_t k, std::vector<RetrievalRow>* dump) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyReference, "retrieval needs both domains");
  if (source_labels.size() != source.rows() || target_labels.size() != target.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "label count mismatch in retrieval");
  }
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "retrieval k must be >= 1");
  require_labels(source_labels, "retrieval references");
  require_labels(target_labels, "retrieval queries");
  double total = 0.0;
  for (std::size_t q = 0; q < target.rows(); ++q) {
    const Vec sims = similarities(source, target.row(q));
    const auto neighbors = top_k(sims, k);
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < neighbors.size(); ++rank) {
      const auto r = neighbors[rank];
      const bool match = source_labels[r] == target_labels[q];
      hits += match ? 1 : 0;
      if (dump) dump->push_back(RetrievalRow{q, rank, r, sims[r], match});
    }
    total += static_cast<double>(hits) / static_cast<double>(neighbors.size());
  }
  return total / static_cast<double>(target.rows());
}

std::string retrieval_rows_to_csv(const std::vector<RetrievalRow>& rows) {
  std::string out = "query_index,rank,neighbor_index,similarity,match\n";
  for (const auto& r : rows) {
    out += std::to_string(r.query_index) + ',' + std::to_string(r.rank) + ',' + std::to_string(r.neighbor_index) +
           ',' + io::format_double(r.similarity) + ',' + (r.match ? "1" : "0") + '\n';
  }
  return out;
}

double confusion_loss(const Matrix& source, const Matrix& target, const ProbeConfig& cfg) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyReference, "confusion needs both domains");
  if (source.cols() != target.cols()) throw Error(ErrorCode::DimensionMismatch, "domain feature widths differ");
  struct Item {
    std::span<const double> f;
    int domain;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < source.rows(); ++i) items.push_back({source.row(i), 0});
  for (std::size_t j = 0; j < target.rows(); ++j) items.push_back({target.row(j), 1});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(items.begin(), items.end(), rng);

  const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * items.size())));
  if (n_test >= items.size()) throw Error(ErrorCode::EmptyReference, "too few samples for a held-out split");
  Matrix train_x;
  std::vector<int> train_y;
  for (std::size_t i = n_test; i < items.size(); ++i) {
    train_x.append_row(items[i].f);
    train_y.push_back(items[i].domain);
  }
  const auto clf = LinearClassifier::train(train_x, train_y, 2, cfg);
  double bce = 0.0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const auto p = clf.predict_proba(items[i].f);
    bce -= std::log(std::max(p.probs[static_cast<std::size_t>(items[i].domain)], 1e-300));
  }
  bce /= static_cast<double>(n_test);
  return std::min(bce, std::numbers::ln2);
}

EvalReport evaluate_features(const Matrix& source, std::span<const int> source_labels, const Matrix& target,
                             std::span<const int> target_labels, const EvalConfig& cfg,
                             std::vector<RetrievalRow>* dump) {
  EvalReport r;
  r.k = cfg.k;
  r.tau_knn = cfg.tau_knn;
  r.retrieval_k = cfg.retrieval_k;
  r.seed = cfg.probe.seed;
  r.knn_accuracy = accuracy(weighted_knn(source, source_labels, target, cfg.k, cfg.tau_knn), target_labels);
  r.linear_accuracy = linear_probe(source, source_labels, target, target_labels, cfg.probe);
  r.retrieval_precision_at_k = retrieval_precision(source, source_labels, target, target_labels, cfg.retrieval_k, dump);
  r.confusion_loss = confusion_loss(source, target, cfg.probe);
  return r;
}

EvalReport evaluate_model(const EncoderModel& model, const DatasetSplit& split, const EvalConfig& cfg,
                          std::vector<RetrievalRow>* dump) {
  const auto view = split.unlabeled_view();
  return evaluate_features(encode_all(model, view.source), LabelOracle::source_labels(split),
                           encode_all(model, view.target), LabelOracle::target_labels(split), cfg, dump);
}

EvalHook knn_hook(const DatasetSplit& split, const EvalConfig& cfg) {
  auto view = std::make_shared<UnlabeledView>(split.unlabeled_view());
  auto src_labels = std::make_shared<std::vector<int>>(LabelOracle::source_labels(split));
  auto tgt_labels = std::make_shared<std::vector<int>>(LabelOracle::target_labels(split));
  return [view, src_labels, tgt_labels, cfg](const EncoderModel& model) {
    const auto pred =
        weighted_knn(encode_all(model, view->source), *src_labels, encode_all(model, view->target), cfg.k, cfg.tau_knn);
    return accuracy(pred, *tgt_labels);
  };
}

std::string report_to_json(const EvalReport& report, const std::string& config_echo) {
  nlohmann::json doc = {{"knn_accuracy", report.knn_accuracy},
                        {"linear_accuracy", report.linear_accuracy},
                        {"retrieval_precision_at_k", report.retrieval_precision_at_k},
                        {"confusion_loss", report.confusion_loss},
                        {"k", report.k},
                        {"tau_knn", report.tau_knn},
                        {"retrieval_k", report.retrieval_k},
                        {"seed", report.seed}};
  if (!config_echo.empty()) doc["config"] = nlohmann::json::parse(config_echo);
  return doc.dump(1) + "\n";
}

}  // namespace cds::eval
