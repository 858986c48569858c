#include "cds/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cds/error.hpp"
#include "cds/io.hpp"
#include "json.hpp"

namespace cds {

using nlohmann::json;

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

EncoderModel::EncoderModel(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void EncoderModel::validate() const {
  if (layers_.empty()) throw Error(ErrorCode::InvalidConfig, "encoder needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
      throw Error(ErrorCode::InvalidConfig, "layer " + std::to_string(l) + " has an empty weight");
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " bias size " +
                                                    std::to_string(layer.bias.size()) + " vs weight " +
                                                    shape_str(layer.weight.rows(), layer.weight.cols()));
    }
    if (l > 0 && layers_[l - 1].weight.rows() != layer.weight.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " input width " +
                                                    std::to_string(layer.weight.cols()) +
                                                    " does not chain with previous output " +
                                                    std::to_string(layers_[l - 1].weight.rows()));
    }
  }
}

EncoderModel EncoderModel::initialize(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.output_dim == 0) {
    throw Error(ErrorCode::InvalidConfig, "encoder dimensions must be positive");
  }
  std::vector<std::size_t> widths{arch.input_dim};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.output_dim);

  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    if (fan_out == 0) throw Error(ErrorCode::InvalidConfig, "hidden width must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    Layer layer;
    layer.weight = Matrix(fan_out, fan_in);
    for (double& w : layer.weight.data()) w = uni(rng);
    layer.bias.assign(fan_out, 0.0);
    layer.activation = (l + 2 < widths.size()) ? Activation::relu : Activation::identity;
    layers.push_back(std::move(layer));
  }
  return EncoderModel(std::move(layers));
}

std::size_t EncoderModel::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }

std::size_t EncoderModel::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.data().size() + layer.bias.size();
  return n;
}

ParamGrads ParamGrads::zeros_like(const EncoderModel& model) {
  ParamGrads g;
  for (const auto& layer : model.layers()) {
    g.weights.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.biases.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

void ParamGrads::add(const ParamGrads& other) {
  if (other.weights.size() != weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& dst = weights[l].data();
    const auto& src = other.weights[l].data();
    if (dst.size() != src.size() || biases[l].size() != other.biases[l].size()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient shape mismatch in layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
}

void ParamGrads::scale(double factor) {
  for (auto& w : weights)
    for (double& x : w.data()) x *= factor;
  for (auto& b : biases)
    for (double& x : b) x *= factor;
}

ForwardResult encoder_forward(const EncoderModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input of size " + std::to_string(x.size()) +
                                                  " for encoder expecting " + std::to_string(model.input_dim()));
  }
  ForwardResult out;
  Vec current(x.begin(), x.end());
  for (const auto& layer : model.layers()) {
    Vec pre(layer.weight.rows());
    for (std::size_t r = 0; r < pre.size(); ++r) pre[r] = dot(layer.weight.row(r), current) + layer.bias[r];
    out.cache.layer_inputs.push_back(std::move(current));
    current = pre;
    if (layer.activation == Activation::relu) {
      for (double& v : current) v = v > 0.0 ? v : 0.0;
    }
    out.cache.pre_activations.push_back(std::move(pre));
  }
  out.feature = l2_normalize(current);
  out.cache.raw_output = std::move(current);
  return out;
}

Matrix encode_all(const EncoderModel& model, const Matrix& inputs) {
  Matrix out(inputs.rows(), model.output_dim());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto f = encoder_forward(model, inputs.row(i)).feature;
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

EncoderGrads encoder_backward(const EncoderModel& model, const ForwardCache& cache,
                              std::span<const double> upstream) {
  const auto& layers = model.layers();
  if (cache.layer_inputs.size() != layers.size() || cache.pre_activations.size() != layers.size()) {
    throw Error(ErrorCode::CacheMismatch, "cache layer count does not match model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache.layer_inputs[l].size() != layers[l].weight.cols() ||
        cache.pre_activations[l].size() != layers[l].weight.rows()) {
      throw Error(ErrorCode::CacheMismatch, "cache shapes do not match layer " + std::to_string(l));
    }
  }
  if (upstream.size() != model.output_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient size " + std::to_string(upstream.size()));
  }

  EncoderGrads grads;
  grads.params = ParamGrads::zeros_like(model);
  Vec delta = l2_normalize_backward(cache.raw_output, upstream);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    if (layer.activation == Activation::relu) {
      const auto& pre = cache.pre_activations[l];
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (!(pre[r] > 0.0)) delta[r] = 0.0;
      }
    }
    const auto& in = cache.layer_inputs[l];
    auto& gw = grads.params.weights[l];
    for (std::size_t r = 0; r < delta.size(); ++r) {
      grads.params.biases[l][r] = delta[r];
      auto row = gw.row(r);
      for (std::size_t c = 0; c < in.size(); ++c) row[c] = delta[r] * in[c];
    }
    Vec next(layer.weight.cols(), 0.0);
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const auto w = layer.weight.row(r);
      for (std::size_t c = 0; c < next.size(); ++c) next[c] += w[c] * delta[r];
    }
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

OptimizerState OptimizerState::for_model(const EncoderModel& model, double lr, double momentum,
                                         double weight_decay) {
  OptimizerState s;
  s.velocity = ParamGrads::zeros_like(model);
  s.lr = lr;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

void sgd_step(EncoderModel& model, OptimizerState& state, const ParamGrads& grads) {
  auto& layers = model.layers();
  if (grads.weights.size() != layers.size() || state.velocity.weights.size() != layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "optimizer/gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weight.data();
    auto& b = layers[l].bias;
    auto& vw = state.velocity.weights[l].data();
    auto& vb = state.velocity.biases[l];
    const auto& gw = grads.weights[l].data();
    const auto& gb = grads.biases[l];
    if (gw.size() != w.size() || vw.size() != w.size() || gb.size() != b.size() || vb.size() != b.size()) {
      throw Error(ErrorCode::DimensionMismatch, "shape mismatch in layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = gw[i] + state.weight_decay * w[i];
      vw[i] = state.momentum * vw[i] + g;
      w[i] -= state.lr * vw[i];
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = state.momentum * vb[i] + gb[i];
      b[i] -= state.lr * vb[i];
    }
  }
}

Vec flatten(const ParamGrads& grads) {
  Vec out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    out.insert(out.end(), grads.weights[l].data().begin(), grads.weights[l].data().end());
    out.insert(out.end(), grads.biases[l].begin(), grads.biases[l].end());
  }
  return out;
}

Vec flatten_params(const EncoderModel& model) {
  Vec out;
  for (const auto& layer : model.layers()) {
    out.insert(out.end(), layer.weight.data().begin(), layer.weight.data().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

void assign_params(EncoderModel& model, std::span<const double> flat) {
  if (flat.size() != model.parameter_count()) {
    throw Error(ErrorCode::DimensionMismatch, "flat parameter vector has wrong size");
  }
  std::size_t pos = 0;
  for (auto& layer : model.layers()) {
    for (double& w : layer.weight.data()) w = flat[pos++];
    for (double& b : layer.bias) b = flat[pos++];
  }
}

// JSON: {"format":"cds-encoder","output_dim":d,"layers":[{"in","out","activation","weight","bias"}]}

namespace {

json params_json(const ParamGrads& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    layers.push_back({{"rows", p.weights[l].rows()},
                      {"cols", p.weights[l].cols()},
                      {"weight", p.weights[l].data()},
                      {"bias", p.biases[l]}});
  }
  return layers;
}

ParamGrads params_from_json(const json& layers) {
  ParamGrads p;
  for (const auto& j : layers) {
    Matrix w(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto values = j.at("weight").get<std::vector<double>>();
    if (values.size() != w.data().size()) throw Error(ErrorCode::ParseError, "velocity weight size mismatch");
    w.data() = std::move(values);
    p.weights.push_back(std::move(w));
    p.biases.push_back(j.at("bias").get<std::vector<double>>());
  }
  return p;
}

}  // namespace

std::string model_to_json(const EncoderModel& model) {
  json layers = json::array();
  for (const auto& layer : model.layers()) {
    layers.push_back({{"in", layer.weight.cols()},
                      {"out", layer.weight.rows()},
                      {"activation", layer.activation == Activation::relu ? "relu" : "identity"},
                      {"weight", layer.weight.data()},
                      {"bias", layer.bias}});
  }
  json doc = {{"format", "cds-encoder"}, {"output_dim", model.output_dim()}, {"layers", layers}};
  return doc.dump(1) + "\n";
}

EncoderModel model_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    std::vector<Layer> layers;
    for (const auto& j : doc.at("layers")) {
      Layer layer;
      const auto in = j.at("in").get<std::size_t>();
      const auto out = j.at("out").get<std::size_t>();
      layer.weight = Matrix(out, in);
      auto values = j.at("weight").get<std::vector<double>>();
      if (values.size() != in * out) {
        throw Error(ErrorCode::ParseError, "weight array of size " + std::to_string(values.size()) +
                                               " for a " + shape_str(out, in) + " layer");
      }
      layer.weight.data() = std::move(values);
      layer.bias = j.at("bias").get<std::vector<double>>();
      const auto act = j.at("activation").get<std::string>();
      if (act == "relu") {
        layer.activation = Activation::relu;
      } else if (act == "identity") {
        layer.activation = Activation::identity;
      } else {
        throw Error(ErrorCode::ParseError, "unknown activation '" + act + "'");
      }
      layers.push_back(std::move(layer));
    }
    EncoderModel model(std::move(layers));
    if (doc.at("output_dim").get<std::size_t>() != model.output_dim()) {
      throw Error(ErrorCode::ParseError, "output_dim disagrees with final layer");
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("encoder json: ") + e.what());
  }
}

void save_model(const EncoderModel& model, const std::filesystem::path& path) {
  io::write_file(path, model_to_json(model));
}

EncoderModel load_model(const std::filesystem::path& path) { return model_from_json(io::read_file(path)); }

std::string optimizer_to_json(const OptimizerState& state) {
  json doc = {{"format", "cds-optimizer"},
              {"lr", state.lr},
              {"momentum", state.momentum},
              {"weight_decay", state.weight_decay},
              {"velocity", params_json(state.velocity)}};
  return doc.dump(1) + "\n";
}

OptimizerState optimizer_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    OptimizerState s;
    s.lr = doc.at("lr").get<double>();
    s.momentum = doc.at("momentum").get<double>();
    s.weight_decay = doc.at("weight_decay").get<double>();
    s.velocity = params_from_json(doc.at("velocity"));
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("optimizer json: ") + e.what());
  }
}

}  // namespace cds
