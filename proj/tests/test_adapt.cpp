#include <cmath>
#include <random>

#include "cds/adapt.hpp"
#include "cds/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cds;
using namespace cds::testing;

namespace {

Matrix random_inputs(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  Matrix m;
  for (std::size_t i = 0; i < n; ++i) m.append_row(random_vec(d, rng, 2.0));
  return m;
}

struct Instance {
  EncoderModel model;
  ClassifierHead head;
  LabeledBatch labeled;
  Matrix unlabeled_source;
  Matrix unlabeled_target;
};

Instance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.model = EncoderModel::initialize({3, {6}, 5}, seed);
  jitter_biases(in.model, rng);
  in.head = ClassifierHead::initialize(4, 5, seed + 100);
  for (double& b : in.head.bias) b = random_vec(1, rng, 0.3)[0];
  in.labeled.inputs = random_inputs(4, 3, rng);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int i = 0; i < 4; ++i) in.labeled.labels.push_back(cls(rng));
  in.unlabeled_source = random_inputs(5, 3, rng);
  in.unlabeled_target = random_inputs(6, 3, rng);
  return in;
}

/// Mean prediction entropy computed straight from the definition.
double ref_mean_entropy(const EncoderModel& model, const ClassifierHead& head, const Matrix& inputs) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto f = encoder_forward(model, inputs.row(i)).feature;
    std::vector<double> z(head.bias);
    double mx = -1e300;
    for (std::size_t k = 0; k < z.size(); ++k) {
      for (std::size_t c = 0; c < f.size(); ++c) z[k] += head.weight(k, c) * f[c];
      mx = std::max(mx, z[k]);
    }
    double s = 0.0;
    for (double& v : z) s += (v = std::exp(v - mx));
    for (double v : z) total -= (v / s) * std::log(v / s);
  }
  return total / static_cast<double>(inputs.rows());
}

}  // namespace

TEST_CASE("head init and forward") {
  const auto a = ClassifierHead::initialize(3, 4, 1);
  CHECK(a == ClassifierHead::initialize(3, 4, 1));
  CHECK_FALSE(a == ClassifierHead::initialize(3, 4, 2));
  CHECK(a.num_classes() == 3);
  CHECK(a.weight.rows() == 3);
  CHECK(a.weight.cols() == 4);
  const auto p = classifier_forward(a, Vec{0.5, 0.5, 0.5, 0.5});
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
  CHECK(head_from_json(head_to_json(a)) == a);
}

TEST_CASE("adapt_loss gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed);
    AdaptConfig cfg;
    cfg.lambda = 0.3;
    cfg.target_entropy_weight = 0.2;
    const auto r = adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg);
    REQUIRE(r.encoder_grads.has_value());

    const auto by_encoder = [&](std::span<const double> flat) {
      EncoderModel m = in.model;
      assign_params(m, flat);
      return adapt_loss(m, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg).total;
    };
    CHECK(finite_diff_check(by_encoder, flatten(*r.encoder_grads), flatten_params(in.model)) < 1e-4);

    Vec head_flat = in.head.weight.data();
    head_flat.insert(head_flat.end(), in.head.bias.begin(), in.head.bias.end());
    Vec head_grad = r.head_weight_grad.data();
    head_grad.insert(head_grad.end(), r.head_bias_grad.begin(), r.head_bias_grad.end());
    const auto by_head = [&](std::span<const double> flat) {
      ClassifierHead h = in.head;
      const std::size_t nw = h.weight.data().size();
      std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nw), h.weight.data().begin());
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(nw), flat.end(), h.bias.begin());
      return adapt_loss(in.model, h, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg).total;
    };
    CHECK(finite_diff_check(by_head, head_grad, head_flat) < 1e-4);
  }
}

TEST_CASE("adapt_loss is additive in lambda") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(seed);
    AdaptConfig cfg;
    cfg.lambda = 0.0;
    const auto base = adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg);
    const double h = ref_mean_entropy(in.model, in.head, in.unlabeled_source);
    for (double lambda : {0.01, 0.05, 0.1, 0.2, 0.3}) {
      cfg.lambda = lambda;
      const auto r = adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg);
      CHECK(std::abs((r.total - base.total) - lambda * h) < 1e-12);
      CHECK(r.loss_da == base.loss_da);
    }
  }
}

TEST_CASE("adapt_loss components") {
  const auto in = random_instance(3);
  AdaptConfig cfg;
  cfg.da_mode = DaMode::source_only;
  const auto so = adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg);
  CHECK(so.loss_da == so.source_ce);
  CHECK(so.target_entropy == 0.0);
  cfg.da_mode = DaMode::target_entmin;
  const auto ent = adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg);
  CHECK(ent.target_entropy == doctest::Approx(ref_mean_entropy(in.model, in.head, in.unlabeled_target)));
  CHECK(ent.loss_da == doctest::Approx(ent.source_ce + cfg.target_entropy_weight * ent.target_entropy));

  cfg.freeze_encoder = true;
  CHECK_FALSE(adapt_loss(in.model, in.head, in.labeled, in.unlabeled_source, in.unlabeled_target, cfg)
                  .encoder_grads.has_value());

  // No unlabeled source: the semi-supervised term vanishes.
  cfg.freeze_encoder = false;
  const auto none = adapt_loss(in.model, in.head, in.labeled, Matrix(), in.unlabeled_target, cfg);
  CHECK(none.loss_su == 0.0);

  CHECK(error_of([&] { adapt_loss(in.model, in.head, LabeledBatch{}, in.unlabeled_source, in.unlabeled_target, cfg); }) ==
        ErrorCode::EmptyBatch);
  CHECK(da_mode_from_string(to_string(DaMode::source_only)) == DaMode::source_only);
}

TEST_CASE("run_adapt: deterministic, logs, early stopping") {
  GeneratorConfig g;
  g.per_class_count = 12;
  const auto data = generate_two_domain(g);
  const auto one_shot = make_split(data, SplitConfig{1, std::nullopt, 0});
  const auto model = EncoderModel::initialize({2, {8}, 4}, 0);
  AdaptConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 8;
  const auto a = run_adapt(model, one_shot, cfg);
  const auto b = run_adapt(model, one_shot, cfg);
  CHECK(adapt_logs_to_csv(a.logs) == adapt_logs_to_csv(b.logs));
  CHECK(a.head == b.head);
  REQUIRE(a.logs.size() == 5);
  CHECK(a.logs[0].epoch == 0);
  CHECK(a.best_epoch >= 0);
  CHECK(a.best_epoch <= 4);
  CHECK(a.best_target_acc == a.logs[static_cast<std::size_t>(a.best_epoch)].target_acc);
  CHECK_FALSE(a.validation_holdout);
  CHECK_FALSE(a.model == model);
  CHECK(adapt_logs_to_csv(a.logs).rfind("epoch,loss_total,loss_da,loss_su,src_unlabeled_acc,target_acc\n", 0) == 0);

  const auto five_shot = make_split(data, SplitConfig{5, std::nullopt, 0});
  CHECK(run_adapt(model, five_shot, cfg).validation_holdout);

  cfg.freeze_encoder = true;
  CHECK(run_adapt(model, one_shot, cfg).model == model);

  cfg.lambda = -1.0;
  CHECK(error_of([&] { run_adapt(model, one_shot, cfg); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("run_adapt: zero epochs leaves the head at initialization") {
  GeneratorConfig g;
  g.per_class_count = 10;
  const auto split = make_split(generate_two_domain(g), SplitConfig{1, std::nullopt, 0});
  const auto model = EncoderModel::initialize({2, {8}, 4}, 0);
  AdaptConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  const auto r = run_adapt(model, split, cfg);
  CHECK(r.logs.size() == 1);
  CHECK(r.best_epoch == 0);
  CHECK(r.head == ClassifierHead::initialize(3, 4, 9));
  CHECK(r.model == model);
}

TEST_CASE("run_adapt: separable frozen features are fit exactly") {
  GeneratorConfig g;
  g.cluster_sigma = 0.2;
  const auto split = make_split(generate_two_domain(g), SplitConfig{3, std::nullopt, 0});
  const auto model = EncoderModel::initialize({2, {16}, 8}, 1);
  AdaptConfig cfg;
  cfg.da_mode = DaMode::source_only;
  cfg.lambda = 0.0;
  cfg.freeze_encoder = true;
  cfg.epochs = 200;
  cfg.batch = 8;
  cfg.lr = 0.1;
  const auto r = run_adapt(model, split, cfg);
  // Three shots per class leave no hold-out, so validation is training accuracy.
  CHECK_FALSE(r.validation_holdout);
  CHECK(r.logs.back().validation_acc == 1.0);
  CHECK(r.model == model);
}
