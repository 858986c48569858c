// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <spdlog/spdlog.h>

#include "cds/adapt.hpp"
#include "cds/commands.hpp"
#include "cds/config.hpp"
#include "cds/eval.hpp"
#include "cds/io.hpp"
#include "cds/losses.hpp"
#include "cds/memory.hpp"
#include "cds/pretrain.hpp"
#include "test_util.hpp"

#ifndef CDS_SOURCE_DIR
#error "CDS_SOURCE_DIR must point at the project root"
#endif
#ifndef CDS_BINARY
#error "CDS_BINARY must point at the cds executable"
#endif

using namespace cds;
using namespace cds::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr int kGradInstances = 20;
constexpr double kGradSeconds = 10.0;
constexpr double kUnitNormTol = 1e-9;
constexpr int kBankUpdates = 1000;
constexpr double kBankSeconds = 1.0;
constexpr int kKnnInstances = 100;
constexpr double kKnnSeconds = 5.0;
constexpr int kEntropyInstances = 50;
constexpr double kEntropyExactTol = 1e-12;
constexpr double kConfusionSeconds = 120.0;
constexpr double kPipelineSeconds = 300.0;
constexpr int kDescentEpochs = 30;
constexpr int kAdditivityInstances = 20;
constexpr double kAdditivityTol = 1e-12;
constexpr double kTau = 0.05;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2, 3, 4};

static_assert(!std::is_default_constructible_v<SealedLabels::Key>,
              "the sealed-label key must not be constructible outside the evaluation oracle");

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cds_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string num(double v) { return io::format_double(v); }

double median_of(std::vector<double> v) { return cli::median(std::move(v)); }

// ---- 1 ----
Outcome gradient_suite() {
  std::mt19937_64 rng(101);
  double worst_wins = 0.0;
  double worst_cdm = 0.0;
  double worst_cds = 0.0;
  double worst_adapt = 0.0;
  double worst_encoder = 0.0;
  for (int trial = 0; trial < kGradInstances; ++trial) {
    const std::size_t d = 4 + static_cast<std::size_t>(trial) % 13;  // 4..16
    const auto s = random_bank(10 + static_cast<std::size_t>(trial) * 2, d, Domain::source, rng);  // <= 48
    const auto t = random_bank(50 - static_cast<std::size_t>(trial), d, Domain::target, rng);       // <= 50
    const auto batch = random_batch(3, 3, s, t, rng);
    const auto check = [&](const auto& loss_fn) {
      const auto report = loss_fn(batch, s, t, kTau);
      const auto fn = [&](std::span<const double> flat) {
        return loss_fn(with_features(batch, flat), s, t, kTau).value;
      };
      return finite_diff_check(fn, flatten_grads(report.grads), flatten_features(batch), 1e-6);
    };
    worst_wins = std::max(worst_wins, check(in_domain_loss));
    worst_cdm = std::max(worst_cdm, check(cross_domain_loss));
    worst_cds = std::max(worst_cds, check(cds_loss));

    // Encoder backward pass.
    auto model = EncoderModel::initialize({3, {8, 8}, d}, static_cast<std::uint64_t>(trial));
    jitter_biases(model, rng);
    const Vec x = random_vec(3, rng, 2.0);
    const Vec up = random_vec(d, rng);
    const auto fwd = encoder_forward(model, x);
    const auto g = encoder_backward(model, fwd.cache, up);
    const auto by_params = [&](std::span<const double> flat) {
      EncoderModel m = model;
      assign_params(m, flat);
      return dot(encoder_forward(m, x).feature, up);
    };
    worst_encoder = std::max(worst_encoder, finite_diff_check(by_params, flatten(g.params), flatten_params(model)));

    // Stage-2 objective, gradient with respect to encoder and head.
    const auto head = ClassifierHead::initialize(3, d, static_cast<std::uint64_t>(trial) + 7);
    LabeledBatch labeled;
    Matrix unl_s;
    Matrix unl_t;
    for (int i = 0; i < 3; ++i) {
      labeled.inputs.append_row(random_vec(3, rng, 2.0));
      labeled.labels.push_back(i);
      unl_s.append_row(random_vec(3, rng, 2.0));
      unl_t.append_row(random_vec(3, rng, 2.0));
    }
    AdaptConfig acfg;
    acfg.lambda = 0.2;
    const auto r = adapt_loss(model, head, labeled, unl_s, unl_t, acfg);
    const auto by_enc = [&](std::span<const double> flat) {
      EncoderModel m = model;
      assign_params(m, flat);
      return adapt_loss(m, head, labeled, unl_s, unl_t, acfg).total;
    };
    worst_adapt = std::max(worst_adapt, finite_diff_check(by_enc, flatten(*r.encoder_grads), flatten_params(model)));
    Vec hflat = head.weight.data();
    hflat.insert(hflat.end(), head.bias.begin(), head.bias.end());
    Vec hgrad = r.head_weight_grad.data();
    hgrad.insert(hgrad.end(), r.head_bias_grad.begin(), r.head_bias_grad.end());
    const auto by_head = [&](std::span<const double> flat) {
      ClassifierHead h = head;
      const auto nw = static_cast<std::ptrdiff_t>(h.weight.data().size());
      std::copy(flat.begin(), flat.begin() + nw, h.weight.data().begin());
      std::copy(flat.begin() + nw, flat.end(), h.bias.begin());
      return adapt_loss(model, h, labeled, unl_s, unl_t, acfg).total;
    };
    worst_adapt = std::max(worst_adapt, finite_diff_check(by_head, hgrad, hflat));
  }
  const double worst = std::max({worst_wins, worst_cdm, worst_cds, worst_adapt, worst_encoder});
  return {worst < kGradTol, "max rel err in-domain=" + num(worst_wins) + " cross=" + num(worst_cdm) +
                                " cds=" + num(worst_cds) + " adapt=" + num(worst_adapt) +
                                " encoder=" + num(worst_encoder)};
}

// ---- 2 ----
Outcome bank_invariants() {
  std::mt19937_64 rng(202);
  auto bank = random_bank(50, 16, Domain::source, rng);
  std::uniform_int_distribution<std::size_t> pick(0, bank.size() - 1);
  for (int i = 0; i < kBankUpdates; ++i) bank.update(pick(rng), random_unit(16, rng), 0.5);
  double worst = 0.0;
  for (std::size_t r = 0; r < bank.size(); ++r) worst = std::max(worst, std::abs(norm2(bank.row(r)) - 1.0));

  bool noop = true;
  bool replace = true;
  for (int i = 0; i < 100; ++i) {
    const auto before = bank.vectors();
    const std::size_t idx = pick(rng);
    const Vec f = random_unit(16, rng);
    bank.update(idx, f, 0.0);
    noop = noop && bank.vectors() == before;
    bank.update(idx, f, 1.0);
    for (std::size_t c = 0; c < 16; ++c) replace = replace && bank.row(idx)[c] == f[c];
    for (std::size_t r = 0; r < bank.size(); ++r) {
      if (r == idx) continue;
      for (std::size_t c = 0; c < 16; ++c) replace = replace && bank.vectors()(r, c) == before(r, c);
    }
  }
  return {worst < kUnitNormTol && noop && replace,
          "max |norm-1|=" + num(worst) + " eta0_noop=" + (noop ? "yes" : "no") +
              " eta1_replace=" + (replace ? "yes" : "no")};
}

// ---- 3 ----
Outcome oracle_equivalence() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> cls(0, 4);
  int mismatches = 0;
  for (int trial = 0; trial < kKnnInstances; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 50;
    const std::size_t k = 1 + static_cast<std::size_t>(trial) % 10;
    const std::size_t d = 2 + static_cast<std::size_t>(trial) % 7;
    const Matrix ref = random_unit_rows(n, d, rng);
    const Matrix q = random_unit_rows(10, d, rng);
    std::vector<int> labels(n);
    for (int& y : labels) y = cls(rng);
    if (eval::weighted_knn(ref, labels, q, k, kTau) != brute_force_knn(ref, labels, q, k, kTau)) ++mismatches;
  }

  // Six points on the unit circle, precision enumerated by hand.
  Matrix src;
  Matrix tgt;
  for (auto [a, b] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}}) src.append_row(Vec{a, b});
  for (auto [a, b] : {std::pair{0.8, 0.6}, {-0.6, 0.8}, {0.0, -1.0}}) tgt.append_row(Vec{a, b});
  const std::vector<int> sl{0, 1, 0};
  struct Row {
    std::vector<int> target_labels;
    std::size_t k;
    double expected;
  };
  const std::vector<Row> table = {
      {{0, 1, 1}, 1, 2.0 / 3.0}, {{0, 1, 1}, 2, 1.0 / 3.0}, {{0, 1, 1}, 3, 4.0 / 9.0},
      {{0, 0, 0}, 1, 2.0 / 3.0}, {{0, 0, 0}, 2, 2.0 / 3.0}, {{1, 1, 1}, 1, 1.0 / 3.0},
      {{1, 1, 1}, 2, 1.0 / 3.0}, {{1, 1, 1}, 3, 1.0 / 3.0},
  };
  int table_misses = 0;
  for (const auto& row : table) {
    const double got = eval::retrieval_precision(src, sl, tgt, row.target_labels, row.k);
    if (std::abs(got - row.expected) > 1e-15) ++table_misses;
  }
  return {mismatches == 0 && table_misses == 0, "knn mismatches=" + std::to_string(mismatches) + "/" +
                                                    std::to_string(kKnnInstances) + " retrieval table misses=" +
                                                    std::to_string(table_misses) + "/" +
                                                    std::to_string(table.size())};
}

// ---- 4 ----
Outcome entropy_bounds() {
  std::mt19937_64 rng(404);
  int violations = 0;
  for (int trial = 0; trial < kEntropyInstances; ++trial) {
    const auto s = random_bank(2 + static_cast<std::size_t>(trial) % 49, 8, Domain::source, rng);
    const auto t = random_bank(50 - static_cast<std::size_t>(trial) % 40, 8, Domain::target, rng);
    const auto batch = random_batch(4, 4, s, t, rng);
    const auto r = cross_domain_loss(batch, s, t, kTau);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double m = static_cast<double>(batch[i].domain == Domain::source ? t.size() : s.size());
      if (!(r.per_sample[i] >= 0.0 && r.per_sample[i] <= std::log(m))) ++violations;
    }
  }
  // Uniform: every opposite row equally similar.
  Matrix same(7, 3);
  for (std::size_t i = 0; i < 7; ++i) same(i, 2) = 1.0;
  const MemoryBank uniform_bank(same, Domain::target);
  const BatchFeatures q{{Vec{1.0, 0.0, 0.0}, 0, Domain::source}};
  const double uniform = cross_domain_loss(q, uniform_bank, uniform_bank, kTau).value;
  // One-hot: a single opposite row.
  Matrix single(1, 3);
  single(0, 1) = 1.0;
  const MemoryBank one(single, Domain::target);
  const double onehot = cross_domain_loss(q, uniform_bank, one, kTau).value;
  const bool exact = std::abs(uniform - std::log(7.0)) <= kEntropyExactTol && std::abs(onehot) <= kEntropyExactTol;
  return {violations == 0 && exact, "bound violations=" + std::to_string(violations) + " uniform-ln7=" +
                                        num(uniform - std::log(7.0)) + " onehot=" + num(onehot)};
}

// ---- 5 ----
Outcome purity() {
  // Bitwise identical stage-1 output with every label stripped.
  GeneratorConfig g;
  const auto split = make_split(generate_two_domain(g), SplitConfig{1, std::nullopt, 0});
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto with = run_pretrain(cfg, split);
  const auto without = run_pretrain(cfg, split.without_labels());
  bool identical = with.state.model == without.state.model && with.state.banks.source == without.state.banks.source &&
                   with.state.banks.target == without.state.banks.target;
  for (std::size_t i = 0; i < with.logs.size(); ++i) {
    identical = identical && with.logs[i].loss_wins == without.logs[i].loss_wins &&
                with.logs[i].loss_cdm == without.logs[i].loss_cdm;
  }

  // Stage-1 sources must not reach the evaluation oracle.
  const fs::path root = CDS_SOURCE_DIR;
  std::vector<std::string> offenders;
  for (const char* f : {"include/cds/pretrain.hpp", "src/pretrain.cpp", "include/cds/losses.hpp", "src/losses.cpp",
                        "include/cds/memory.hpp", "src/memory.cpp", "include/cds/encoder.hpp", "src/encoder.cpp"}) {
    const std::string text = io::read_file(root / f);
    if (text.find("cds/eval.hpp") != std::string::npos || text.find("LabelOracle") != std::string::npos ||
        text.find("sealed()") != std::string::npos || text.find(".label") != std::string::npos) {
      offenders.emplace_back(f);
    }
  }
  std::string detail = std::string("stripped-label run identical=") + (identical ? "yes" : "no") + " offenders=";
  detail += offenders.empty() ? "none" : offenders.front();
  return {identical && offenders.empty(), detail};
}

DatasetSplit default_split(std::uint64_t seed) {
  auto cfg = parse_config("{}");
  cfg.apply_seed(seed);
  return cli::load_split(cfg);
}

TrainConfig default_train(std::uint64_t seed) {
  auto cfg = parse_config("{}");
  cfg.apply_seed(seed);
  return cfg.pretrain.train;
}

// ---- 6 ----
Outcome confusion_claim() {
  std::vector<double> random_init;
  std::vector<double> pretrained;
  const auto probe = parse_config("{}").eval.eval.probe;
  for (auto seed : kSeeds) {
    const auto split = default_split(seed);
    const auto train = default_train(seed);
    const auto view = split.unlabeled_view();
    auto p = probe;
    p.seed = seed;
    const auto init = initial_encoder(train, split.input_dim());
    random_init.push_back(eval::confusion_loss(encode_all(init, view.source), encode_all(init, view.target), p));
    const auto model = run_pretrain(train, split).state.model;
    pretrained.push_back(eval::confusion_loss(encode_all(model, view.source), encode_all(model, view.target), p));
  }
  const double a = median_of(pretrained);
  const double b = median_of(random_init);
  return {a > b, "median confusion cds=" + num(a) + " random_init=" + num(b)};
}

// ---- 7 ----
Outcome ablation_claim() {
  const auto dir = scratch("pipeline");
  const auto cfg = parse_config("{}");
  const auto rows = cli::cmd_pipeline(cfg, dir);
  double cds = 0.0;
  double wins = 0.0;
  double none = 0.0;
  double uni = 0.0;
  for (const auto& r : rows) {
    if (r.seed) continue;
    if (r.arm == cli::Arm::cds) cds = r.knn_acc;
    if (r.arm == cli::Arm::in_domain) wins = r.knn_acc;
    if (r.arm == cli::Arm::no_pretrain) none = r.knn_acc;
    if (r.arm == cli::Arm::union_id) uni = r.knn_acc;
  }
  fs::remove_all(dir);
  const bool pass = cds >= wins && cds >= none && (cds > wins || cds > none);
  return {pass, "median target kNN cds=" + num(cds) + " in_domain=" + num(wins) + " no_pretrain=" + num(none) +
                    " union_id=" + num(uni)};
}

// ---- 8 ----
Outcome descent_claim() {
  std::vector<double> deltas;
  std::string per_seed;
  for (auto seed : kSeeds) {
    auto train = default_train(seed);
    train.epochs = kDescentEpochs;
    const auto logs = run_pretrain(train, default_split(seed)).logs;
    const double delta = logs.back().loss_cdm - logs.front().loss_cdm;
    deltas.push_back(delta);
    per_seed += " " + num(logs.front().loss_cdm) + "->" + num(logs.back().loss_cdm);
  }
  const double med = median_of(deltas);
  return {med < 0.0, "median (last - first) L_CDM=" + num(med) + ";" + per_seed};
}

// ---- 9 ----
int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDS_BINARY) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string mask_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out += (pos == std::string::npos ? line : line.substr(0, pos)) + "\n";
  }
  return out;
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  const std::string base = R"("pretrain": {"epochs": 5}, "adapt": {"epochs": 5}, "seeds": [0, 1])";
  io::write_file(dir / "base.json", "{" + base + "}");
  io::write_file(dir / "adapt.json", R"({"pretrain": {"epochs": 5}, "adapt": {"epochs": 5, "model": ")" +
                                         (dir / "run_a" / "pretrain" / "model.json").string() + "\"}}");
  io::write_file(dir / "eval.json", R"({"eval": {"dump_retrieval": true, "model": ")" +
                                        (dir / "run_a" / "pretrain" / "model.json").string() + "\"}}");
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "base.json"}, {"pretrain", "base.json"}, {"adapt", "adapt.json"},
      {"eval", "eval.json"},     {"pipeline", "base.json"},
  };
  int failures = 0;
  for (const char* run : {"run_a", "run_b"}) {
    for (const auto& [sub, config] : commands) {
      const auto out = dir / run / sub;
      if (run_cli(sub + " --config " + (dir / config).string() + " --out " + out.string()) != 0) ++failures;
    }
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "run_a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "run_a");
    const auto other = dir / "run_b" / rel;
    std::string a = io::read_file(entry.path());
    std::string b = fs::exists(other) ? io::read_file(other) : std::string("<missing>");
    if (rel.filename() == "pretrain_log.csv") {
      a = mask_seconds(a);
      b = mask_seconds(b);
    }
    ++compared;
    if (a != b) differing.push_back(rel.string());
  }
  fs::remove_all(dir);
  std::string detail = "files compared=" + std::to_string(compared) + " differing=" + std::to_string(differing.size()) +
                       " command failures=" + std::to_string(failures);
  if (!differing.empty()) detail += " first=" + differing.front();
  return {failures == 0 && compared > 0 && differing.empty(), detail};
}

// ---- 10 ----
Outcome additivity() {
  std::mt19937_64 rng(1010);
  double worst = 0.0;
  for (int trial = 0; trial < kAdditivityInstances; ++trial) {
    auto model = EncoderModel::initialize({2, {16}, 8}, static_cast<std::uint64_t>(trial));
    jitter_biases(model, rng);
    const auto head = ClassifierHead::initialize(3, 8, static_cast<std::uint64_t>(trial) + 50);
    LabeledBatch labeled;
    Matrix unl_s;
    Matrix unl_t;
    for (int i = 0; i < 6; ++i) {
      labeled.inputs.append_row(random_vec(2, rng, 3.0));
      labeled.labels.push_back(i % 3);
    }
    for (int i = 0; i < 10; ++i) {
      unl_s.append_row(random_vec(2, rng, 3.0));
      unl_t.append_row(random_vec(2, rng, 3.0));
    }
    // Mean D_su prediction entropy, from the definition.
    double h = 0.0;
    for (std::size_t i = 0; i < unl_s.rows(); ++i) {
      const auto f = encoder_forward(model, unl_s.row(i)).feature;
      Vec z = head.bias;
      for (std::size_t k = 0; k < z.size(); ++k) {
        for (std::size_t c = 0; c < f.size(); ++c) z[k] += head.weight(k, c) * f[c];
      }
      double norm = 0.0;
      for (double v : z) norm += std::exp(v);
      for (double v : z) h -= std::exp(v) / norm * std::log(std::exp(v) / norm);
    }
    h /= static_cast<double>(unl_s.rows());

    AdaptConfig cfg;
    cfg.lambda = 0.0;
    const double base = adapt_loss(model, head, labeled, unl_s, unl_t, cfg).total;
    for (double lambda : {0.01, 0.05, 0.1, 0.2, 0.3}) {
      cfg.lambda = lambda;
      const double total = adapt_loss(model, head, labeled, unl_s, unl_t, cfg).total;
      worst = std::max(worst, std::abs((total - base) - lambda * h));
    }
  }
  return {worst <= kAdditivityTol, "max |delta - lambda*H|=" + num(worst)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    double seconds_limit;  // <= 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", kGradSeconds, gradient_suite},
      {2, "memory-bank invariants", kBankSeconds, bank_invariants},
      {3, "oracle equivalence", kKnnSeconds, oracle_equivalence},
      {4, "entropy bounds", 0.0, entropy_bounds},
      {5, "self-supervision purity", 0.0, purity},
      {6, "confusion: cds > random init", kConfusionSeconds, confusion_claim},
      {7, "ablation: cds >= in-domain, no-pretrain", kPipelineSeconds, ablation_claim},
      {8, "cross-domain loss descent", 0.0, descent_claim},
      {9, "determinism", 0.0, determinism},
      {10, "adapt loss additivity", 0.0, additivity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = c.seconds_limit <= 0.0 || secs < c.seconds_limit;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::string limit = c.seconds_limit > 0.0 ? std::string(" (limit ") + num(c.seconds_limit) + "s)" : "";
    std::printf("%s [%d] %s: %s; %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing,
                limit.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
