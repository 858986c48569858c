#include "cds/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "cds/error.hpp"
#include "cds/eval.hpp"
#include "cds/io.hpp"
#include "json.hpp"

namespace cds {

ClassifierHead ClassifierHead::initialize(int num_classes, std::size_t dim, std::uint64_t seed) {
  if (num_classes < 1 || dim == 0) throw Error(ErrorCode::InvalidConfig, "classifier head needs classes and width");
  ClassifierHead head;
  head.weight = Matrix(static_cast<std::size_t>(num_classes), dim);
  head.bias.assign(static_cast<std::size_t>(num_classes), 0.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(dim + static_cast<std::size_t>(num_classes)));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-limit, limit);
  for (double& w : head.weight.data()) w = uni(rng);
  return head;
}

Distribution classifier_forward(const ClassifierHead& head, std::span<const double> f) {
  if (f.size() != head.weight.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "feature width " + std::to_string(f.size()) + " vs head width " +
                                                  std::to_string(head.weight.cols()));
  }
  Vec logits(head.bias);
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += dot(head.weight.row(c), f);
  return softmax_temp(logits, 1.0);
}

std::string_view to_string(DaMode m) { return m == DaMode::source_only ? "source_only" : "target_entmin"; }

DaMode da_mode_from_string(std::string_view s) {
  if (s == "source_only") return DaMode::source_only;
  if (s == "target_entmin") return DaMode::target_entmin;
  throw Error(ErrorCode::InvalidConfig, "unknown da_mode '" + std::string(s) + "'");
}

void AdaptConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (!(target_entropy_weight >= 0.0)) fail("target_entropy_weight must be non-negative");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch == 0) fail("batch must be positive");
}

namespace {

// Accumulates one sample's logit gradient into head and encoder gradients.
struct GradSink {
  const EncoderModel& model;
  const ClassifierHead& head;
  AdaptLossReport& report;

  void add(const ForwardResult& fwd, const Vec& logit_grad) {
    const auto& f = fwd.feature;
    for (std::size_t c = 0; c < logit_grad.size(); ++c) {
      report.head_bias_grad[c] += logit_grad[c];
      auto row = report.head_weight_grad.row(c);
      for (std::size_t j = 0; j < f.size(); ++j) row[j] += logit_grad[c] * f[j];
    }
    if (!report.encoder_grads) return;
    Vec df(f.size(), 0.0);
    for (std::size_t c = 0; c < logit_grad.size(); ++c) {
      const auto w = head.weight.row(c);
      for (std::size_t j = 0; j < df.size(); ++j) df[j] += w[j] * logit_grad[c];
    }
    report.encoder_grads->add(encoder_backward(model, fwd.cache, df).params);
  }
};

// Mean prediction entropy over rows, accumulating scaled gradients.
double entropy_term(const Matrix& inputs, double weight, GradSink& sink) {
  if (inputs.empty()) return 0.0;
  const auto n = static_cast<double>(inputs.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto fwd = encoder_forward(sink.model, inputs.row(i));
    const auto p = classifier_forward(sink.head, fwd.feature);
    total += entropy(p);
    if (weight != 0.0) {
      Vec g = entropy_logit_grad(p);
      for (double& x : g) x *= weight / n;
      sink.add(fwd, g);
    }
  }
  return total / n;
}

}  // namespace

AdaptLossReport adapt_loss(const EncoderModel& model, const ClassifierHead& head, const LabeledBatch& labeled,
                           const Matrix& unlabeled_source, const Matrix& unlabeled_target, const AdaptConfig& config) {
  if (labeled.inputs.empty()) throw Error(ErrorCode::EmptyBatch, "labeled source batch is empty");
  if (labeled.labels.size() != labeled.inputs.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "labeled batch inputs and labels differ in count");
  }
  if (model.output_dim() != head.weight.cols()) throw Error(ErrorCode::DimensionMismatch, "head/encoder width mismatch");

  AdaptLossReport report;
  report.head_weight_grad = Matrix(head.weight.rows(), head.weight.cols());
  report.head_bias_grad.assign(head.bias.size(), 0.0);
  if (!config.freeze_encoder) report.encoder_grads = ParamGrads::zeros_like(model);
  GradSink sink{model, head, report};

  const auto n_l = static_cast<double>(labeled.inputs.rows());
  double ce = 0.0;
  for (std::size_t i = 0; i < labeled.inputs.rows(); ++i) {
    const int y = labeled.labels[i];
    if (y < 0 || y >= head.num_classes()) {
      throw Error(ErrorCode::IndexOutOfRange, "label " + std::to_string(y) + " outside classifier range");
    }
    const auto fwd = encoder_forward(model, labeled.inputs.row(i));
    const auto p = classifier_forward(head, fwd.feature);
    ce += cross_entropy_at(p, static_cast<std::size_t>(y));
    Vec g = p.probs;
    g[static_cast<std::size_t>(y)] -= 1.0;
    for (double& x : g) x /= n_l;
    sink.add(fwd, g);
  }
  report.source_ce = ce / n_l;

  const bool use_target = config.da_mode == DaMode::target_entmin;
  const double target_weight = use_target ? config.target_entropy_weight : 0.0;
  report.target_entropy = use_target ? entropy_term(unlabeled_target, target_weight, sink) : 0.0;
  report.loss_da = report.source_ce + target_weight * report.target_entropy;
  report.loss_su = entropy_term(unlabeled_source, config.lambda, sink);
  report.total = report.loss_da + config.lambda * report.loss_su;
  return report;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, int epoch, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), stream};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Matrix gather(const Matrix& m, const std::vector<std::size_t>& perm, std::size_t start, std::size_t count) {
  Matrix out;
  if (m.empty()) return out;
  for (std::size_t k = 0; k < count; ++k) out.append_row(m.row(perm[(start + k) % m.rows()]));
  return out;
}

std::vector<int> predict_all(const EncoderModel& model, const ClassifierHead& head, const Matrix& inputs) {
  std::vector<int> out(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto p = classifier_forward(head, encoder_forward(model, inputs.row(i)).feature);
    out[i] = static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  }
  return out;
}

struct HeadVelocity {
  Matrix weight;
  Vec bias;
};

void head_step(ClassifierHead& head, HeadVelocity& v, const AdaptLossReport& r, const AdaptConfig& cfg) {
  auto& w = head.weight.data();
  auto& vw = v.weight.data();
  const auto& gw = r.head_weight_grad.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    vw[i] = cfg.momentum * vw[i] + gw[i] + cfg.weight_decay * w[i];
    w[i] -= cfg.lr * vw[i];
  }
  for (std::size_t i = 0; i < head.bias.size(); ++i) {
    v.bias[i] = cfg.momentum * v.bias[i] + r.head_bias_grad[i];
    head.bias[i] -= cfg.lr * v.bias[i];
  }
}

}  // namespace

AdaptResult run_adapt(const EncoderModel& model, const DatasetSplit& split, const AdaptConfig& config) {
  config.validate();
  if (split.labeled_source().empty()) throw Error(ErrorCode::InvalidConfig, "no labeled source samples");
  if (split.target_count() == 0) throw Error(ErrorCode::InvalidConfig, "no target samples");

  // Hold out `validation_per_class` labeled examples per class when every
  // class keeps at least one training example; otherwise validate on train.
  std::map<int, std::vector<const Sample*>> by_class;
  for (const auto& s : split.labeled_source()) by_class[s.label].push_back(&s);
  bool holdout = config.validation_per_class > 0;
  for (const auto& [c, members] : by_class) holdout = holdout && members.size() > config.validation_per_class;

  LabeledBatch train;
  LabeledBatch validation;
  std::mt19937_64 val_rng(config.seed ^ 0x5eedULL);
  for (auto& [c, members] : by_class) {
    auto shuffled = members;
    if (holdout) std::shuffle(shuffled.begin(), shuffled.end(), val_rng);
    for (std::size_t k = 0; k < shuffled.size(); ++k) {
      LabeledBatch& dst = (holdout && k < config.validation_per_class) ? validation : train;
      dst.inputs.append_row(shuffled[k]->x);
      dst.labels.push_back(c);
    }
  }
  if (!holdout) validation = train;

  Matrix unlabeled_source;
  for (const auto& s : split.unlabeled_source()) unlabeled_source.append_row(s.x);
  Matrix target;
  {
    const auto view = split.unlabeled_view();
    target = view.target;
  }
  const auto target_truth = eval::LabelOracle::target_labels(split);
  const auto su_truth = eval::LabelOracle::unlabeled_source_labels(split);

  AdaptResult result;
  result.model = model;
  result.head = ClassifierHead::initialize(split.num_classes(), model.output_dim(), config.seed);
  result.validation_holdout = holdout;
  OptimizerState enc_opt = OptimizerState::for_model(model, config.lr, config.momentum, config.weight_decay);
  HeadVelocity head_v{Matrix(result.head.weight.rows(), result.head.weight.cols()),
                      Vec(result.head.bias.size(), 0.0)};

  auto record = [&](int epoch, double total, double da, double su) {
    AdaptEpochLog log;
    log.epoch = epoch;
    log.loss_total = total;
    log.loss_da = da;
    log.loss_su = su;
    log.target_acc = eval::accuracy(predict_all(result.model, result.head, target), target_truth);
    if (!unlabeled_source.empty()) {
      log.src_unlabeled_acc = eval::accuracy(predict_all(result.model, result.head, unlabeled_source), su_truth);
    }
    log.validation_acc = eval::accuracy(predict_all(result.model, result.head, validation.inputs), validation.labels);
    spdlog::debug("adapt epoch {}: loss={:.6f} target_acc={:.4f} val_acc={:.4f}", epoch, total, log.target_acc,
                  log.validation_acc);
    result.logs.push_back(log);
  };

  {
    const auto r0 = adapt_loss(result.model, result.head, train, unlabeled_source, target, config);
    record(0, r0.total, r0.loss_da, r0.loss_su);
  }

  const std::size_t n_l = train.inputs.rows();
  const std::size_t n_su = unlabeled_source.rows();
  const std::size_t n_t = target.rows();
  const std::size_t b_l = std::min(config.batch, n_l);
  const std::size_t b_su = std::min(config.batch, n_su);
  const std::size_t b_t = std::min(config.batch, n_t);
  const auto ceil_div = [](std::size_t a, std::size_t b) { return b == 0 ? std::size_t{0} : (a + b - 1) / b; };
  const std::size_t steps = std::max({ceil_div(n_l, b_l), ceil_div(n_su, b_su), ceil_div(n_t, b_t)});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm_l = permutation(n_l, config.seed, epoch, 0);
    const auto perm_su = permutation(n_su, config.seed, epoch, 1);
    const auto perm_t = permutation(n_t, config.seed, epoch, 2);
    double sum_total = 0.0;
    double sum_da = 0.0;
    double sum_su = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      LabeledBatch lb;
      for (std::size_t k = 0; k < b_l; ++k) {
        const auto i = perm_l[(step * b_l + k) % n_l];
        lb.inputs.append_row(train.inputs.row(i));
        lb.labels.push_back(train.labels[i]);
      }
      const Matrix su = gather(unlabeled_source, perm_su, step * b_su, b_su);
      const Matrix tb = gather(target, perm_t, step * b_t, b_t);
      const auto r = adapt_loss(result.model, result.head, lb, su, tb, config);
      if (r.encoder_grads) sgd_step(result.model, enc_opt, *r.encoder_grads);
      head_step(result.head, head_v, r, config);
      sum_total += r.total;
      sum_da += r.loss_da;
      sum_su += r.loss_su;
    }
    const auto n = static_cast<double>(steps);
    record(epoch + 1, sum_total / n, sum_da / n, sum_su / n);
  }

  std::size_t best = 0;
  for (std::size_t e = 1; e < result.logs.size(); ++e) {
    if (result.logs[e].validation_acc > result.logs[best].validation_acc) best = e;
  }
  result.best_epoch = result.logs[best].epoch;
  result.best_target_acc = result.logs[best].target_acc;
  return result;
}

std::string adapt_logs_to_csv(const std::vector<AdaptEpochLog>& logs) {
  std::string out = "epoch,loss_total,loss_da,loss_su,src_unlabeled_acc,target_acc\n";
  for (const auto& l : logs) {
    out += std::to_string(l.epoch) + ',' + io::format_double(l.loss_total) + ',' + io::format_double(l.loss_da) +
           ',' + io::format_double(l.loss_su) + ',' +
           (l.src_unlabeled_acc ? io::format_double(*l.src_unlabeled_acc) : "") + ',' +
           io::format_double(l.target_acc) + '\n';
  }
  return out;
}

std::string head_to_json(const ClassifierHead& head) {
  nlohmann::json doc = {{"format", "cds-head"},
                        {"num_classes", head.weight.rows()},
                        {"dim", head.weight.cols()},
                        {"weight", head.weight.data()},
                        {"bias", head.bias}};
  return doc.dump(1) + "\n";
}

ClassifierHead head_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ClassifierHead head;
    head.weight = Matrix(doc.at("num_classes").get<std::size_t>(), doc.at("dim").get<std::size_t>());
    auto w = doc.at("weight").get<std::vector<double>>();
    if (w.size() != head.weight.data().size()) throw Error(ErrorCode::ParseError, "head weight size mismatch");
    head.weight.data() = std::move(w);
    head.bias = doc.at("bias").get<std::vector<double>>();
    if (head.bias.size() != head.weight.rows()) throw Error(ErrorCode::ParseError, "head bias size mismatch");
    return head;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("head json: ") + e.what());
  }
}

}  // namespace cds
