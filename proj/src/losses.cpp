#include "cds/losses.hpp"

#include <string>

#include "cds/error.hpp"

namespace cds {

namespace {

const MemoryBank& own_bank(const BatchItem& item, const MemoryBank& s, const MemoryBank& t) {
  return item.domain == Domain::source ? s : t;
}

const MemoryBank& opposite_bank(const BatchItem& item, const MemoryBank& s, const MemoryBank& t) {
  return item.domain == Domain::source ? t : s;
}

void check_common(const BatchFeatures& batch, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau must be positive");
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "loss over an empty batch");
}

// sum_k w_k v_k / scale
Vec weighted_rows(const MemoryBank& bank, const Vec& weights, double scale) {
  Vec out(bank.dim(), 0.0);
  for (std::size_t k = 0; k < bank.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const auto row = bank.row(k);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += weights[k] * row[c];
  }
  for (double& x : out) x /= scale;
  return out;
}

}  // namespace

LossReport in_domain_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                          const MemoryBank& target_bank, double tau) {
  check_common(batch, tau);
  const double scale = tau * static_cast<double>(batch.size());
  LossReport report;
  double total = 0.0;
  for (const auto& item : batch) {
    const MemoryBank& bank = own_bank(item, source_bank, target_bank);
    if (item.index >= bank.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "batch index " + std::to_string(item.index) + " outside " +
                                                  std::string(to_string(item.domain)) + " bank of size " +
                                                  std::to_string(bank.size()));
    }
    const Distribution p = softmax_temp(bank_similarities(bank, item.feature), tau);
    const double term = cross_entropy_at(p, item.index);
    report.per_sample.push_back(term);
    total += term;
    // d(-log p_i)/ds_k = p_k - [k == i], ds_k/df = v_k / tau
    Vec w = p.probs;
    w[item.index] -= 1.0;
    report.grads.push_back(weighted_rows(bank, w, scale));
  }
  report.value = total / static_cast<double>(batch.size());
  return report;
}

LossReport cross_domain_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                             const MemoryBank& target_bank, double tau) {
  check_common(batch, tau);
  const double scale = tau * static_cast<double>(batch.size());
  LossReport report;
  double total = 0.0;
  for (const auto& item : batch) {
    const MemoryBank& bank = opposite_bank(item, source_bank, target_bank);
    if (bank.size() == 0) {
      throw Error(ErrorCode::EmptyDomain, "opposite bank of a " + std::string(to_string(item.domain)) +
                                              " feature is empty");
    }
    const Distribution p = softmax_temp(bank_similarities(bank, item.feature), tau);
    const double term = entropy(p);
    report.per_sample.push_back(term);
    total += term;
    report.grads.push_back(weighted_rows(bank, entropy_logit_grad(p), scale));
  }
  report.value = total / static_cast<double>(batch.size());
  return report;
}

LossReport cds_loss(const BatchFeatures& batch, const MemoryBank& source_bank, const MemoryBank& target_bank,
                    double tau) {
  LossReport in = in_domain_loss(batch, source_bank, target_bank, tau);
  const LossReport cross = cross_domain_loss(batch, source_bank, target_bank, tau);
  in.value += cross.value;
  for (std::size_t b = 0; b < in.grads.size(); ++b) {
    for (std::size_t c = 0; c < in.grads[b].size(); ++c) in.grads[b][c] += cross.grads[b][c];
    in.per_sample[b] += cross.per_sample[b];
  }
  return in;
}

LossReport union_instance_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                               const MemoryBank& target_bank, double tau) {
  check_common(batch, tau);
  if (source_bank.dim() != target_bank.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "source and target banks differ in width");
  }
  const std::size_t ns = source_bank.size();
  const double scale = tau * static_cast<double>(batch.size());
  LossReport report;
  double total = 0.0;
  for (const auto& item : batch) {
    const MemoryBank& bank = own_bank(item, source_bank, target_bank);
    if (item.index >= bank.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "batch index " + std::to_string(item.index) + " outside bank");
    }
    ScoreVector scores = bank_similarities(source_bank, item.feature);
    const ScoreVector tail = bank_similarities(target_bank, item.feature);
    scores.insert(scores.end(), tail.begin(), tail.end());
    const std::size_t positive = item.domain == Domain::source ? item.index : ns + item.index;
    const Distribution p = softmax_temp(scores, tau);
    const double term = cross_entropy_at(p, positive);
    report.per_sample.push_back(term);
    total += term;

    Vec w = p.probs;
    w[positive] -= 1.0;
    const Vec ws(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(ns));
    const Vec wt(w.begin() + static_cast<std::ptrdiff_t>(ns), w.end());
    Vec g = weighted_rows(source_bank, ws, scale);
    const Vec gt = weighted_rows(target_bank, wt, scale);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += gt[c];
    report.grads.push_back(std::move(g));
  }
  report.value = total / static_cast<double>(batch.size());
  return report;
}

}  // namespace cds
