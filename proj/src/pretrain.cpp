#include "cds/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "cds/error.hpp"
#include "cds/io.hpp"
#include "cds/losses.hpp"
#include "json.hpp"

namespace cds {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::cds: return "cds";
    case Objective::in_domain: return "in_domain";
    case Objective::union_id: return "union_id";
  }
  return "cds";
}

Objective objective_from_string(std::string_view s) {
  if (s == "cds") return Objective::cds;
  if (s == "in_domain") return Objective::in_domain;
  if (s == "union_id") return Objective::union_id;
  throw Error(ErrorCode::InvalidConfig, "unknown objective '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) fail("eta must lie in [0, 1]");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (batch_source == 0 || batch_target == 0) fail("batch sizes must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (feature_dim == 0) fail("feature_dim must be positive");
  for (auto h : hidden)
    if (h == 0) fail("hidden widths must be positive");
}

EncoderModel initial_encoder(const TrainConfig& config, std::size_t input_dim) {
  return EncoderModel::initialize(Architecture{input_dim, config.hidden, config.feature_dim}, config.seed);
}

std::size_t steps_per_epoch(std::size_t n_source, std::size_t n_target, std::size_t batch_source,
                            std::size_t batch_target) {
  const auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return std::max(ceil_div(n_source, batch_source), ceil_div(n_target, batch_target));
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch, Domain domain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), domain == Domain::source ? 0u : 1u};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

struct StepLosses {
  double wins = 0.0;
  double cdm = 0.0;
};

StepLosses train_step(const TrainConfig& config, const UnlabeledView& view, PretrainState& state,
                      const std::vector<std::size_t>& src_idx, const std::vector<std::size_t>& tgt_idx) {
  BatchFeatures batch;
  std::vector<ForwardCache> caches;
  batch.reserve(src_idx.size() + tgt_idx.size());
  caches.reserve(src_idx.size() + tgt_idx.size());
  auto push = [&](const Matrix& inputs, std::size_t i, Domain d) {
    auto fwd = encoder_forward(state.model, inputs.row(i));
    batch.push_back(BatchItem{std::move(fwd.feature), i, d});
    caches.push_back(std::move(fwd.cache));
  };
  for (auto i : src_idx) push(view.source, i, Domain::source);
  for (auto j : tgt_idx) push(view.target, j, Domain::target);

  const auto& banks = state.banks;
  LossReport cross = cross_domain_loss(batch, banks.source, banks.target, config.tau);
  LossReport discrimination = config.objective == Objective::union_id
                                  ? union_instance_loss(batch, banks.source, banks.target, config.tau)
                                  : in_domain_loss(batch, banks.source, banks.target, config.tau);

  ParamGrads grads = ParamGrads::zeros_like(state.model);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Vec g = discrimination.grads[b];
    if (config.objective == Objective::cds) {
      for (std::size_t c = 0; c < g.size(); ++c) g[c] += cross.grads[b][c];
    }
    grads.add(encoder_backward(state.model, caches[b], g).params);
  }
  sgd_step(state.model, state.optimizer, grads);

  // Source members first, then target, each in batch order.
  for (const auto& item : batch) {
    MemoryBank& bank = item.domain == Domain::source ? state.banks.source : state.banks.target;
    bank.update(item.index, item.feature, config.eta);
  }
  return StepLosses{discrimination.value, cross.value};
}

void run_epochs(const TrainConfig& config, const UnlabeledView& view, PretrainState& state,
                const EvalHook& hook, std::vector<EpochLog>& logs) {
  const std::size_t ns = view.source.rows();
  const std::size_t nt = view.target.rows();
  const std::size_t steps = steps_per_epoch(ns, nt, config.batch_source, config.batch_target);
  for (int epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto perm_s = epoch_permutation(ns, config.seed, epoch, Domain::source);
    const auto perm_t = epoch_permutation(nt, config.seed, epoch, Domain::target);
    double sum_wins = 0.0;
    double sum_cdm = 0.0;
    std::vector<std::size_t> src_idx(config.batch_source);
    std::vector<std::size_t> tgt_idx(config.batch_target);
    for (std::size_t step = 0; step < steps; ++step) {
      // Full batches; the walk wraps around each permutation.
      for (std::size_t k = 0; k < src_idx.size(); ++k) src_idx[k] = perm_s[(step * config.batch_source + k) % ns];
      for (std::size_t k = 0; k < tgt_idx.size(); ++k) tgt_idx[k] = perm_t[(step * config.batch_target + k) % nt];
      const StepLosses l = train_step(config, view, state, src_idx, tgt_idx);
      sum_wins += l.wins;
      sum_cdm += l.cdm;
    }
    state.epochs_done = epoch + 1;

    EpochLog log;
    log.epoch = epoch + 1;
    log.loss_wins = sum_wins / static_cast<double>(steps);
    log.loss_cdm = sum_cdm / static_cast<double>(steps);
    log.loss_cds = log.loss_wins + log.loss_cdm;
    if (hook) log.knn_acc = hook(state.model);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    spdlog::debug("pretrain epoch {}: wins={:.6f} cdm={:.6f} cds={:.6f}", log.epoch, log.loss_wins,
                  log.loss_cdm, log.loss_cds);
    logs.push_back(log);
  }
}

void check_view(const TrainConfig& config, const UnlabeledView& view) {
  config.validate();
  if (view.source.empty()) throw Error(ErrorCode::EmptyDomain, "source domain has no samples");
  if (view.target.empty()) throw Error(ErrorCode::EmptyDomain, "target domain has no samples");
  if (config.batch_source > view.source.rows() || config.batch_target > view.target.rows()) {
    throw Error(ErrorCode::InvalidConfig, "batch size exceeds domain size (source " +
                                              std::to_string(view.source.rows()) + ", target " +
                                              std::to_string(view.target.rows()) + ")");
  }
}

}  // namespace

PretrainResult run_pretrain(const TrainConfig& config, const UnlabeledView& view, const EvalHook& hook) {
  check_view(config, view);
  PretrainState state;
  state.model = initial_encoder(config, view.source.cols());
  state.optimizer = OptimizerState::for_model(state.model, config.lr, config.momentum, config.weight_decay);
  state.banks = init_banks(state.model, view);
  return resume_pretrain(config, view, std::move(state), hook);
}

PretrainResult run_pretrain(const TrainConfig& config, const DatasetSplit& split, const EvalHook& hook) {
  return run_pretrain(config, split.unlabeled_view(), hook);
}

PretrainResult resume_pretrain(const TrainConfig& config, const UnlabeledView& view, PretrainState state,
                               const EvalHook& hook) {
  check_view(config, view);
  if (state.model.input_dim() != view.source.cols() || state.model.output_dim() != state.banks.source.dim() ||
      state.banks.source.size() != view.source.rows() || state.banks.target.size() != view.target.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "saved state does not match the dataset");
  }
  state.optimizer.lr = config.lr;
  state.optimizer.momentum = config.momentum;
  state.optimizer.weight_decay = config.weight_decay;
  state.banks.source.set_renormalize(config.renormalize_bank);
  state.banks.target.set_renormalize(config.renormalize_bank);
  PretrainResult result;
  run_epochs(config, view, state, hook, result.logs);
  result.state = std::move(state);
  return result;
}

std::string epoch_logs_to_csv(const std::vector<EpochLog>& logs) {
  std::string out = "epoch,loss_wins,loss_cdm,loss_cds,knn_acc,seconds\n";
  for (const auto& l : logs) {
    out += std::to_string(l.epoch) + ',' + io::format_double(l.loss_wins) + ',' + io::format_double(l.loss_cdm) +
           ',' + io::format_double(l.loss_cds) + ',' + (l.knn_acc ? io::format_double(*l.knn_acc) : "") + ',' +
           io::format_double(l.seconds) + '\n';
  }
  return out;
}

void save_pretrain_state(const PretrainState& state, const std::filesystem::path& dir) {
  save_model(state.model, dir / "model.json");
  io::write_file(dir / "optimizer.json", optimizer_to_json(state.optimizer));
  save_bank(state.banks.source, dir / "source_bank.csv");
  save_bank(state.banks.target, dir / "target_bank.csv");
  nlohmann::json doc = {{"epochs_done", state.epochs_done},
                        {"renormalize_bank", state.banks.source.renormalize()}};
  io::write_file(dir / "state.json", doc.dump(1) + "\n");
}

PretrainState load_pretrain_state(const std::filesystem::path& dir) {
  PretrainState state;
  state.model = load_model(dir / "model.json");
  state.optimizer = optimizer_from_json(io::read_file(dir / "optimizer.json"));
  state.banks.source = load_bank(dir / "source_bank.csv");
  state.banks.target = load_bank(dir / "target_bank.csv");
  try {
    const auto doc = nlohmann::json::parse(io::read_file(dir / "state.json"));
    state.epochs_done = doc.at("epochs_done").get<int>();
    const bool renorm = doc.value("renormalize_bank", true);
    state.banks.source.set_renormalize(renorm);
    state.banks.target.set_renormalize(renorm);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("state.json: ") + e.what());
  }
  return state;
}

}  // namespace cds
