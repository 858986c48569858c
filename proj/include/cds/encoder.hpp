#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cds/numerics.hpp"

namespace cds {

enum class Activation { relu, identity };

struct Layer {
  Matrix weight;  // out x in
  Vec bias;       // out
  Activation activation = Activation::identity;
};

/// Hidden widths plus the embedding size d. The last layer is always linear
/// (identity) and followed by L2 normalization.
struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t output_dim = 16;
};

/// Feature extractor F: MLP followed by an L2-normalization layer.
class EncoderModel {
 public:
  EncoderModel() = default;
  explicit EncoderModel(std::vector<Layer> layers);

  /// Glorot-uniform weights and zero biases drawn from a seeded generator.
  static EncoderModel initialize(const Architecture& arch, std::uint64_t seed);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  friend bool operator==(const EncoderModel&, const EncoderModel&) = default;

 private:
  void validate() const;

  std::vector<Layer> layers_;
};

inline bool operator==(const Layer& a, const Layer& b) {
  return a.weight == b.weight && a.bias == b.bias && a.activation == b.activation;
}

/// Activations recorded by a forward pass: the input of every layer, every
/// pre-activation, and the unnormalized output.
struct ForwardCache {
  std::vector<Vec> layer_inputs;
  std::vector<Vec> pre_activations;
  Vec raw_output;
};

struct ForwardResult {
  FeatureVector feature;
  ForwardCache cache;
};

/// Parameter-shaped buffers; used for gradients and optimizer velocities.
struct ParamGrads {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  static ParamGrads zeros_like(const EncoderModel& model);
  void add(const ParamGrads& other);
  void scale(double factor);
};

struct EncoderGrads {
  ParamGrads params;
  Vec input;
};

ForwardResult encoder_forward(const EncoderModel& model, std::span<const double> x);

/// Features only; convenience for bank initialization and evaluation.
Matrix encode_all(const EncoderModel& model, const Matrix& inputs);

/// Reverse-mode gradients of the forward map given dLoss/df.
EncoderGrads encoder_backward(const EncoderModel& model, const ForwardCache& cache,
                              std::span<const double> upstream);

struct OptimizerState {
  ParamGrads velocity;
  double lr = 0.003;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  static OptimizerState for_model(const EncoderModel& model, double lr, double momentum,
                                  double weight_decay);
};

/// SGD with momentum and decoupled-from-bias weight decay:
///   g = grad + wd * W;  v = mu * v + g;  W -= lr * v
/// Biases skip the weight-decay term.
void sgd_step(EncoderModel& model, OptimizerState& state, const ParamGrads& grads);

/// Flat views in layer order (weights row-major, then bias, per layer).
Vec flatten(const ParamGrads& grads);
Vec flatten_params(const EncoderModel& model);
void assign_params(EncoderModel& model, std::span<const double> flat);

std::string model_to_json(const EncoderModel& model);
EncoderModel model_from_json(const std::string& text);
void save_model(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_model(const std::filesystem::path& path);

std::string optimizer_to_json(const OptimizerState& state);
OptimizerState optimizer_from_json(const std::string& text);

}  // namespace cds
