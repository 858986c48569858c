#pragma once

#include <vector>

#include "cds/data.hpp"
#include "cds/memory.hpp"
#include "cds/numerics.hpp"

namespace cds {

/// One batch member: its live feature, its identity in its own domain's
/// bank, and which domain it came from.
struct BatchItem {
  FeatureVector feature;
  std::size_t index = 0;
  Domain domain = Domain::source;
};

using BatchFeatures = std::vector<BatchItem>;

/// Loss value, dLoss/df for every batch member (same order as the batch), and
/// the per-sample terms before batch averaging.
struct LossReport {
  double value = 0.0;
  std::vector<Vec> grads;
  Vec per_sample;
};

/// In-domain instance discrimination. Each feature is classified against its
/// own domain's bank only, with its stale bank row as the positive:
///   term_i = -log softmax(V_dom f_i / tau)[i]
/// averaged over the combined batch. Bank rows are constants.
LossReport in_domain_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                          const MemoryBank& target_bank, double tau);

/// Cross-domain matching: entropy of each feature's similarity distribution
/// over the opposite domain's bank, averaged over the combined batch.
LossReport cross_domain_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                             const MemoryBank& target_bank, double tau);

/// in_domain_loss + cross_domain_loss, value and gradients summed.
LossReport cds_loss(const BatchFeatures& batch, const MemoryBank& source_bank, const MemoryBank& target_bank,
                    double tau);

/// Domain-agnostic instance discrimination over the union of both banks
/// (source rows first, then target rows). Baseline for ablations.
LossReport union_instance_loss(const BatchFeatures& batch, const MemoryBank& source_bank,
                               const MemoryBank& target_bank, double tau);

}  // namespace cds
