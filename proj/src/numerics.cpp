#include "cds/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cds/error.hpp"

namespace cds {

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(ErrorCode::DimensionMismatch, "row of width " + std::to_string(values.size()) +
                                                  " appended to matrix of width " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dot of sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

FeatureVector l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n > kNormEpsilon)) throw Error(ErrorCode::NormTooSmall, "norm " + std::to_string(n));
  FeatureVector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Vec l2_normalize_backward(std::span<const double> v, std::span<const double> upstream) {
  if (v.size() != upstream.size()) {
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient does not match input size");
  }
  const double n = norm2(v);
  if (!(n > kNormEpsilon)) throw Error(ErrorCode::NormTooSmall, "norm " + std::to_string(n));
  double radial = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) radial += (v[i] / n) * upstream[i];
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (upstream[i] - radial * (v[i] / n)) / n;
  return out;
}

Distribution softmax_temp(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau must be positive");
  Distribution p;
  if (scores.empty()) return p;
  const double top = *std::max_element(scores.begin(), scores.end());
  p.probs.resize(scores.size());
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p.probs[k] = std::exp((scores[k] - top) / tau);
    z += p.probs[k];
  }
  for (double& x : p.probs) x /= z;
  return p;
}

double entropy(const Distribution& p) {
  double h = 0.0;
  for (double x : p.probs) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double cross_entropy_at(const Distribution& p, std::size_t index) {
  if (index >= p.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "index " + std::to_string(index) + " in distribution of size " + std::to_string(p.size()));
  }
  if (p[index] <= 0.0) throw Error(ErrorCode::InfiniteLoss, "probability of target index is zero");
  return -std::log(p[index]);
}

Vec entropy_logit_grad(const Distribution& p) {
  const double h = entropy(p);
  Vec g(p.size(), 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) g[k] = -p[k] * (std::log(p[k]) + h);
  }
  return g;
}

double finite_diff_check(const ScalarFn& fn, std::span<const double> analytic_grad,
                         std::span<const double> x, double h) {
  if (analytic_grad.size() != x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient and point differ in size");
  }
  Vec probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + h;
    const double up = fn(probe);
    probe[k] = saved - h;
    const double down = fn(probe);
    probe[k] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double g = analytic_grad[k];
    const double scale = std::max({1.0, std::abs(fd), std::abs(g)});
    worst = std::max(worst, std::abs(fd - g) / scale);
  }
  return worst;
}

}  // namespace cds
