#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace cds {

using Vec = std::vector<double>;

/// Unit-norm embedding produced by the encoder.
using FeatureVector = Vec;

/// Cosine similarities of one query against a set of rows.
using ScoreVector = Vec;

/// Dense row-major matrix. Rows are exposed as spans so callers never touch
/// raw offsets.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void append_row(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Probability vector: non-negative entries summing to one.
struct Distribution {
  Vec probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t k) const { return probs[k]; }
};

inline constexpr double kNormEpsilon = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

/// v / ||v||. Throws NormTooSmall when ||v|| <= kNormEpsilon.
FeatureVector l2_normalize(std::span<const double> v);

/// Vector-Jacobian product of l2_normalize at v: (I - f f^T) upstream / ||v||.
Vec l2_normalize_backward(std::span<const double> v, std::span<const double> upstream);

/// exp(s_k / tau) / sum_j exp(s_j / tau), evaluated after subtracting max(s).
Distribution softmax_temp(std::span<const double> scores, double tau);

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(const Distribution& p);

/// -log p[index]. Throws InfiniteLoss when p[index] == 0.
double cross_entropy_at(const Distribution& p, std::size_t index);

/// d entropy(softmax(z)) / d z_k = -p_k (log p_k + H). Gradient with respect
/// to the logits z (not the temperature-scaled scores).
Vec entropy_logit_grad(const Distribution& p);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central-difference check of an analytic gradient. Returns
/// max_k |fd_k - g_k| / max(1, |fd_k|, |g_k|).
double finite_diff_check(const ScalarFn& fn, std::span<const double> analytic_grad,
                         std::span<const double> x, double h = 1e-5);

}  // namespace cds
