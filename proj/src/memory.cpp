#include "cds/memory.hpp"

#include <cmath>
#include <string>

#include "cds/error.hpp"
#include "cds/io.hpp"

namespace cds {

MemoryBank::MemoryBank(Matrix vectors, Domain domain, bool renormalize)
    : vectors_(std::move(vectors)), domain_(domain), renormalize_(renormalize) {}

void MemoryBank::update(std::size_t index, std::span<const double> f, double eta) {
  if (index >= size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "bank index " + std::to_string(index) + " of " + std::to_string(size()));
  }
  if (f.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "feature width differs from bank");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "eta must lie in [0, 1]");
  auto row = vectors_.row(index);
  if (eta == 0.0) return;
  Vec blended(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) blended[k] = (1.0 - eta) * row[k] + eta * f[k];
  if (renormalize_) {
    // eta == 1 stores f itself, bit for bit.
    const Vec stored = eta == 1.0 ? Vec(f.begin(), f.end()) : l2_normalize(blended);
    std::copy(stored.begin(), stored.end(), row.begin());
  } else {
    std::copy(blended.begin(), blended.end(), row.begin());
  }
}

BankPair init_banks(const EncoderModel& model, const UnlabeledView& view) {
  if (view.source.empty()) throw Error(ErrorCode::EmptyDomain, "source domain has no samples");
  if (view.target.empty()) throw Error(ErrorCode::EmptyDomain, "target domain has no samples");
  return BankPair{MemoryBank(encode_all(model, view.source), Domain::source),
                  MemoryBank(encode_all(model, view.target), Domain::target)};
}

BankPair init_banks(const EncoderModel& model, const DatasetSplit& split) {
  if (split.source_count() == 0) throw Error(ErrorCode::EmptyDomain, "source domain has no samples");
  if (split.target_count() == 0) throw Error(ErrorCode::EmptyDomain, "target domain has no samples");
  return init_banks(model, split.unlabeled_view());
}

ScoreVector bank_similarities(const MemoryBank& bank, std::span<const double> f) {
  if (f.size() != bank.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature of width " + std::to_string(f.size()) + " vs bank width " + std::to_string(bank.dim()));
  }
  ScoreVector scores(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) scores[k] = dot(bank.row(k), f);
  return scores;
}

void bank_update(MemoryBank& bank, std::size_t index, std::span<const double> f, double eta) {
  bank.update(index, f, eta);
}

std::string bank_to_csv(const MemoryBank& bank) {
  std::string out = "#domain_tag=" + std::string(to_string(bank.domain())) + ",N=" + std::to_string(bank.size()) +
                    ",d=" + std::to_string(bank.dim()) + "\n";
  for (std::size_t k = 0; k < bank.dim(); ++k) {
    if (k) out += ',';
    out += "dim" + std::to_string(k);
  }
  out += '\n';
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto row = bank.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += io::format_double(row[k]);
    }
    out += '\n';
  }
  return out;
}

MemoryBank bank_from_csv(const std::string& text) {
  std::vector<std::string_view> lines;
  for (auto part : io::split(text, '\n')) {
    if (!part.empty() && part.back() == '\r') part.remove_suffix(1);
    lines.push_back(part);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2 || !lines[0].starts_with("#domain_tag=")) {
    throw Error(ErrorCode::ParseError, "line 1: expected #domain_tag=...,N=...,d=... header");
  }
  const auto meta = io::split(lines[0].substr(1), ',');
  if (meta.size() != 3 || !meta[1].starts_with("N=") || !meta[2].starts_with("d=")) {
    throw Error(ErrorCode::ParseError, "line 1: malformed bank header");
  }
  const Domain domain = domain_from_string(meta[0].substr(std::string_view("domain_tag=").size()));
  long n = 0;
  long d = 0;
  if (!io::parse_long(meta[1].substr(2), n) || !io::parse_long(meta[2].substr(2), d) || n < 0 || d <= 0) {
    throw Error(ErrorCode::ParseError, "line 1: bad N or d");
  }
  if (lines.size() != static_cast<std::size_t>(n) + 2) {
    throw Error(ErrorCode::ParseError, "bank declares " + std::to_string(n) + " rows but has " +
                                           std::to_string(lines.size() - 2));
  }
  Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto cols = io::split(lines[i + 2], ',');
    if (cols.size() != m.cols()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 3) + ": expected " + std::to_string(d) +
                                             " columns");
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!io::parse_double(cols[k], m(i, k))) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 3) + ": bad value");
      }
    }
  }
  return MemoryBank(std::move(m), domain);
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  io::write_file(path, bank_to_csv(bank));
}

MemoryBank load_bank(const std::filesystem::path& path) { return bank_from_csv(io::read_file(path)); }

}  // namespace cds
