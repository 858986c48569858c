#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>

#include "cds/data.hpp"
#include "cds/encoder.hpp"
#include "cds/numerics.hpp"

namespace cds {

/// Cached per-domain features, one unit-norm row per sample; row index is the
/// sample identity.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(Matrix vectors, Domain domain, bool renormalize = true);

  const Matrix& vectors() const noexcept { return vectors_; }
  Domain domain() const noexcept { return domain_; }
  std::size_t size() const noexcept { return vectors_.rows(); }
  std::size_t dim() const noexcept { return vectors_.cols(); }
  std::span<const double> row(std::size_t i) const { return vectors_.row(i); }

  /// When false, bank_update stores the raw momentum blend (ablation only).
  bool renormalize() const noexcept { return renormalize_; }
  void set_renormalize(bool on) noexcept { renormalize_ = on; }

  /// row <- normalize((1 - eta) row + eta f). Only row `index` changes.
  void update(std::size_t index, std::span<const double> f, double eta);

  friend bool operator==(const MemoryBank& a, const MemoryBank& b) {
    return a.vectors_ == b.vectors_ && a.domain_ == b.domain_;
  }

 private:
  Matrix vectors_;
  Domain domain_ = Domain::source;
  bool renormalize_ = true;
};

struct BankPair {
  MemoryBank source;
  MemoryBank target;
};

BankPair init_banks(const EncoderModel& model, const UnlabeledView& view);
BankPair init_banks(const EncoderModel& model, const DatasetSplit& split);

/// scores[k] = row_k . f
ScoreVector bank_similarities(const MemoryBank& bank, std::span<const double> f);

void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> f, double eta);

/// `#domain_tag=<tag>,N=<rows>,d=<cols>` then `dim0,...` then one row per sample.
std::string bank_to_csv(const MemoryBank& bank);
MemoryBank bank_from_csv(const std::string& text);
void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);

}  // namespace cds
