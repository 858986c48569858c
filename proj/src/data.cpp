#include "cds/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "cds/error.hpp"
#include "cds/io.hpp"
#include "json.hpp"

namespace cds {

std::string_view to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain domain_from_string(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw Error(ErrorCode::ParseError, "unknown domain '" + std::string(s) + "'");
}

namespace {

void check_contiguous(std::vector<std::size_t> idx, const char* what) {
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] != i) {
      throw Error(ErrorCode::InvalidConfig, std::string(what) + " indices are not a permutation of 0..N-1");
    }
  }
}

}  // namespace

DatasetSplit::DatasetSplit(std::vector<Sample> labeled_source, std::vector<Sample> unlabeled_source,
                           std::vector<Sample> unlabeled_target, int num_classes, SealedLabels sealed)
    : labeled_source_(std::move(labeled_source)),
      unlabeled_source_(std::move(unlabeled_source)),
      unlabeled_target_(std::move(unlabeled_target)),
      num_classes_(num_classes),
      sealed_(std::move(sealed)) {
  if (num_classes_ < 1) throw Error(ErrorCode::InvalidConfig, "num_classes must be positive");
  std::vector<bool> seen(static_cast<std::size_t>(num_classes_), false);
  std::vector<std::size_t> src_idx;
  for (const auto& s : labeled_source_) {
    if (s.label < 0 || s.label >= num_classes_) {
      throw Error(ErrorCode::InvalidConfig, "labeled source sample " + std::to_string(s.index) +
                                                " has label " + std::to_string(s.label));
    }
    seen[static_cast<std::size_t>(s.label)] = true;
    src_idx.push_back(s.index);
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw Error(ErrorCode::InvalidConfig, "class " + std::to_string(c) + " has no labeled example");
  }
  for (auto& s : unlabeled_source_) {
    s.label = kUnlabeled;
    src_idx.push_back(s.index);
  }
  std::vector<std::size_t> tgt_idx;
  for (auto& s : unlabeled_target_) {
    s.label = kUnlabeled;
    tgt_idx.push_back(s.index);
  }
  check_contiguous(src_idx, "source");
  check_contiguous(tgt_idx, "target");
}

std::size_t DatasetSplit::input_dim() const {
  if (!labeled_source_.empty()) return labeled_source_.front().x.size();
  if (!unlabeled_target_.empty()) return unlabeled_target_.front().x.size();
  return 0;
}

UnlabeledView DatasetSplit::unlabeled_view() const {
  const std::size_t dim = input_dim();
  UnlabeledView view{Matrix(source_count(), dim), Matrix(target_count(), dim)};
  auto place = [dim](Matrix& m, const Sample& s) {
    if (s.x.size() != dim) throw Error(ErrorCode::DimensionMismatch, "inconsistent input dimension");
    std::copy(s.x.begin(), s.x.end(), m.row(s.index).begin());
  };
  for (const auto& s : labeled_source_) place(view.source, s);
  for (const auto& s : unlabeled_source_) place(view.source, s);
  for (const auto& s : unlabeled_target_) place(view.target, s);
  return view;
}

DatasetSplit DatasetSplit::without_labels() const {
  DatasetSplit out;
  out.labeled_source_ = labeled_source_;
  for (auto& s : out.labeled_source_) s.label = kUnlabeled;
  out.unlabeled_source_ = unlabeled_source_;
  out.unlabeled_target_ = unlabeled_target_;
  out.num_classes_ = num_classes_;
  out.sealed_ = SealedLabels(std::vector<int>(unlabeled_source_.size(), kUnlabeled),
                             std::vector<int>(unlabeled_target_.size(), kUnlabeled));
  return out;
}

TwoDomainData generate_two_domain(const GeneratorConfig& cfg) {
  if (cfg.num_classes < 2) throw Error(ErrorCode::InvalidConfig, "num_classes must be >= 2");
  if (cfg.per_class_count < 2) throw Error(ErrorCode::InvalidConfig, "per_class_count must be >= 2");
  if (cfg.input_dim < 2) throw Error(ErrorCode::InvalidConfig, "input_dim must be >= 2");
  if (!(cfg.cluster_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "cluster_sigma must be >= 0");
  if (!(cfg.shift.scale > 0.0)) throw Error(ErrorCode::InvalidConfig, "shift scale must be > 0");
  if (!(cfg.shift.noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
  if (cfg.shift.translation.size() > cfg.input_dim) {
    throw Error(ErrorCode::InvalidConfig, "translation longer than input_dim");
  }

  constexpr double kRadius = 4.0;
  std::vector<Vec> means;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / cfg.num_classes;
    Vec m(cfg.input_dim, 0.0);
    m[0] = kRadius * std::cos(angle);
    m[1] = kRadius * std::sin(angle);
    means.push_back(std::move(m));
  }

  auto draw = [&](std::mt19937_64& rng, int c) {
    std::normal_distribution<double> noise(0.0, 1.0);
    Vec x = means[static_cast<std::size_t>(c)];
    for (double& v : x) v += cfg.cluster_sigma * noise(rng);
    return x;
  };

  std::seed_seq src_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0u};
  std::seed_seq tgt_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
  std::mt19937_64 src_rng(src_seed);
  std::mt19937_64 tgt_rng(tgt_seed);

  TwoDomainData out;
  out.num_classes = cfg.num_classes;
  const double ca = std::cos(cfg.shift.rotation_angle);
  const double sa = std::sin(cfg.shift.rotation_angle);
  std::normal_distribution<double> shift_noise(0.0, 1.0);
  std::size_t idx = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int n = 0; n < cfg.per_class_count; ++n, ++idx) {
      out.source.push_back(Sample{draw(src_rng, c), c, Domain::source, idx});

      Vec x = draw(tgt_rng, c);
      const double x0 = x[0];
      const double x1 = x[1];
      x[0] = ca * x0 - sa * x1;
      x[1] = sa * x0 + ca * x1;
      for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] *= cfg.shift.scale;
        if (k < cfg.shift.translation.size()) x[k] += cfg.shift.translation[k];
        if (cfg.shift.noise_sigma > 0.0) x[k] += cfg.shift.noise_sigma * shift_noise(tgt_rng);
      }
      out.target.push_back(Sample{std::move(x), c, Domain::target, idx});
    }
  }
  return out;
}

SourcePartition split_few_shot(const std::vector<Sample>& source, int num_classes, const SplitConfig& cfg) {
  if (cfg.shots_per_class.has_value() == cfg.label_fraction.has_value()) {
    throw Error(ErrorCode::InvalidConfig, "exactly one of shots_per_class or label_fraction must be set");
  }
  if (cfg.shots_per_class && *cfg.shots_per_class < 1) {
    throw Error(ErrorCode::InvalidConfig, "shots_per_class must be >= 1");
  }
  if (cfg.label_fraction && !(*cfg.label_fraction > 0.0 && *cfg.label_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "label_fraction must lie in (0, 1]");
  }
  if (num_classes < 1) throw Error(ErrorCode::InvalidConfig, "num_classes must be positive");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int y = source[i].label;
    if (y < 0 || y >= num_classes) {
      throw Error(ErrorCode::InvalidConfig, "source sample " + std::to_string(source[i].index) +
                                                " lacks a valid label for splitting");
    }
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  std::size_t smallest = source.size();
  for (const auto& members : by_class) smallest = std::min(smallest, members.size());
  if (smallest == 0) throw Error(ErrorCode::InvalidConfig, "a class has no source samples");
  if (cfg.shots_per_class && static_cast<std::size_t>(*cfg.shots_per_class) > smallest) {
    throw Error(ErrorCode::InvalidConfig, "shots_per_class " + std::to_string(*cfg.shots_per_class) +
                                              " exceeds the smallest class size " + std::to_string(smallest));
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<bool> chosen(source.size(), false);
  for (auto& members : by_class) {
    std::size_t take = 0;
    if (cfg.shots_per_class) {
      take = static_cast<std::size_t>(*cfg.shots_per_class);
    } else {
      // Tolerance absorbs products like 0.1 * 30 = 3.0000000000000004.
      const double want = std::ceil(*cfg.label_fraction * static_cast<double>(members.size()) - 1e-9);
      take = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, members.size());
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < take; ++k) chosen[members[k]] = true;
  }

  SourcePartition part;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (chosen[i]) {
      part.labeled.push_back(source[i]);
    } else {
      Sample s = source[i];
      part.unlabeled_truth.push_back(s.label);
      s.label = kUnlabeled;
      part.unlabeled.push_back(std::move(s));
    }
  }
  return part;
}

DatasetSplit make_split(const TwoDomainData& data, const SourcePartition& part) {
  std::vector<int> target_truth;
  std::vector<Sample> target = data.target;
  for (auto& s : target) {
    target_truth.push_back(s.label);
    s.label = kUnlabeled;
  }
  return DatasetSplit(part.labeled, part.unlabeled, std::move(target), data.num_classes,
                      SealedLabels(part.unlabeled_truth, std::move(target_truth)));
}

DatasetSplit make_split(const TwoDomainData& data, const SplitConfig& cfg) {
  return make_split(data, split_few_shot(data.source, data.num_classes, cfg));
}

std::string samples_to_csv(const std::vector<Sample>& samples, std::size_t dim) {
  std::string out = "domain,index,label";
  for (std::size_t k = 0; k < dim; ++k) out += ",dim" + std::to_string(k);
  out += '\n';
  for (const auto& s : samples) {
    if (s.x.size() != dim) throw Error(ErrorCode::DimensionMismatch, "sample width differs from header");
    out += to_string(s.domain);
    out += ',' + std::to_string(s.index) + ',' + std::to_string(s.label);
    for (double v : s.x) out += ',' + io::format_double(v);
    out += '\n';
  }
  return out;
}

std::vector<Sample> samples_from_csv(std::string_view text) {
  std::vector<Sample> out;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cols = io::split(line, ',');
    if (line_no == 1) {
      if (cols.size() < 3 || cols[0] != "domain" || cols[1] != "index" || cols[2] != "label") {
        throw Error(ErrorCode::ParseError, "line 1: expected header domain,index,label,dim0,...");
      }
      width = cols.size();
      continue;
    }
    if (cols.size() != width) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(width) + " columns, found " +
                                             std::to_string(cols.size()));
    }
    Sample s;
    try {
      s.domain = domain_from_string(cols[0]);
    } catch (const Error&) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad domain");
    }
    long index = 0;
    long label = 0;
    if (!io::parse_long(cols[1], index) || index < 0) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad index");
    }
    if (!io::parse_long(cols[2], label) || label < kUnlabeled) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad label");
    }
    s.index = static_cast<std::size_t>(index);
    s.label = static_cast<int>(label);
    s.x.resize(width - 3);
    for (std::size_t k = 3; k < width; ++k) {
      if (!io::parse_double(cols[k], s.x[k - 3])) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad value in column " +
                                               std::to_string(k + 1));
      }
    }
    out.push_back(std::move(s));
  }
  if (line_no == 0) throw Error(ErrorCode::ParseError, "line 1: missing header");
  return out;
}

void save_feature_csv(const std::filesystem::path& path, const std::vector<Sample>& samples, std::size_t dim) {
  io::write_file(path, samples_to_csv(samples, dim));
}

std::vector<Sample> load_feature_csv(const std::filesystem::path& path) {
  return samples_from_csv(io::read_file(path));
}

std::string split_to_json(const SourcePartition& part, int num_classes) {
  std::map<int, std::vector<std::size_t>> per_class;
  for (int c = 0; c < num_classes; ++c) per_class[c];
  for (const auto& s : part.labeled) per_class[s.label].push_back(s.index);
  nlohmann::json labeled = nlohmann::json::object();
  for (auto& [c, idx] : per_class) {
    std::sort(idx.begin(), idx.end());
    labeled[std::to_string(c)] = idx;
  }
  nlohmann::json doc = {{"num_classes", num_classes}, {"labeled", labeled}};
  return doc.dump(1) + "\n";
}

SourcePartition partition_from_json(const std::string& text, const std::vector<Sample>& source) {
  std::vector<bool> chosen(source.size(), false);
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& [cls, arr] : doc.at("labeled").items()) {
      for (const auto& j : arr) {
        const auto idx = j.get<std::size_t>();
        auto it = std::find_if(source.begin(), source.end(), [idx](const Sample& s) { return s.index == idx; });
        if (it == source.end()) throw Error(ErrorCode::ParseError, "split lists unknown index " + std::to_string(idx));
        if (std::to_string(it->label) != cls) {
          throw Error(ErrorCode::ParseError, "split class " + cls + " disagrees with label of sample " +
                                                 std::to_string(idx));
        }
        chosen[static_cast<std::size_t>(it - source.begin())] = true;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("split json: ") + e.what());
  }
  SourcePartition part;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (chosen[i]) {
      part.labeled.push_back(source[i]);
    } else {
      Sample s = source[i];
      part.unlabeled_truth.push_back(s.label);
      s.label = kUnlabeled;
      part.unlabeled.push_back(std::move(s));
    }
  }
  return part;
}

}  // namespace cds
