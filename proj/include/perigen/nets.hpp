#pragma once

// Small dense feedforward networks with periodic, monotonicitised periodic and
// snake activations. Gradients are exact reverse-mode, including per-neuron
// snake frequencies when those are trainable.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "perigen/errors.hpp"
#include "perigen/rng.hpp"

namespace perigen {

enum class Activation { Linear, ReLU, Sin, Cos, SinPlusCos, XPlusSin, XPlusCos, Snake };

inline constexpr Activation kAllActivations[] = {
    Activation::Linear,     Activation::ReLU,     Activation::Sin,      Activation::Cos,
    Activation::SinPlusCos, Activation::XPlusSin, Activation::XPlusCos, Activation::Snake};

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::ReLU: return "relu";
    case Activation::Sin: return "sin";
    case Activation::Cos: return "cos";
    case Activation::SinPlusCos: return "sin+cos";
    case Activation::XPlusSin: return "x+sin";
    case Activation::XPlusCos: return "x+cos";
    case Activation::Snake: return "snake";
  }
  return "?";
}

inline std::optional<Activation> activation_from_string(std::string_view s) {
  for (Activation a : kAllActivations)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

struct ActivationValue {
  double value = 0.0;
  double d_dz = 0.0;
  double d_da = 0.0;  // derivative w.r.t. the snake frequency; 0 otherwise
};

inline ActivationValue activate(Activation kind, double z, double a = 1.0) {
  switch (kind) {
    case Activation::Linear: return {z, 1.0, 0.0};
    case Activation::ReLU: return z > 0.0 ? ActivationValue{z, 1.0, 0.0} : ActivationValue{0.0, 0.0, 0.0};
    case Activation::Sin: return {std::sin(z), std::cos(z), 0.0};
    case Activation::Cos: return {std::cos(z), -std::sin(z), 0.0};
    case Activation::SinPlusCos: {
      const double s = std::sin(z), c = std::cos(z);
      return {s + c, c - s, 0.0};
    }
    case Activation::XPlusSin: return {z + std::sin(z), 1.0 + std::cos(z), 0.0};
    case Activation::XPlusCos: return {z + std::cos(z), 1.0 - std::sin(z), 0.0};
    case Activation::Snake: {
      // z + sin^2(a z); d/dz = 1 + a sin(2az), d/da = z sin(2az)
      const double s = std::sin(a * z);
      const double s2 = std::sin(2.0 * a * z);
      return {z + s * s, 1.0 + a * s2, z * s2};
    }
  }
  return {};
}

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Activation activation = Activation::Linear;
  std::vector<double> weights;      // row-major, outputs x inputs
  std::vector<double> biases;       // outputs
  std::vector<double> frequencies;  // outputs when Snake, else empty
  bool trainable_frequency = false;

  double& weight(std::size_t o, std::size_t i) { return weights[o * inputs + i]; }
  double weight(std::size_t o, std::size_t i) const { return weights[o * inputs + i]; }

  bool trains_frequencies() const { return activation == Activation::Snake && trainable_frequency; }

  std::size_t parameter_count() const {
    return weights.size() + biases.size() + (trains_frequencies() ? frequencies.size() : 0);
  }

  bool operator==(const DenseLayer&) const = default;
};

/// Glorot-uniform weights on [-L, L], L = sqrt(6 / (in + out)); zero biases.
inline DenseLayer glorot_layer(std::size_t outputs, std::size_t inputs, Activation act, Rng& rng) {
  if (outputs < 1 || inputs < 1) throw DimensionMismatch("layer dimensions must be >= 1");
  DenseLayer l;
  l.inputs = inputs;
  l.outputs = outputs;
  l.activation = act;
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  std::uniform_real_distribution<double> u(-limit, limit);
  l.weights.resize(outputs * inputs);
  for (double& w : l.weights) w = u(rng);
  l.biases.assign(outputs, 0.0);
  if (act == Activation::Snake) l.frequencies.assign(outputs, 1.0);
  return l;
}

inline DenseLayer glorot_init(std::size_t outputs, std::size_t inputs, std::uint64_t seed,
                              Activation act = Activation::Linear) {
  Rng rng(seed);
  return glorot_layer(outputs, inputs, act, rng);
}

struct Tape {
  // Per layer: its input, its activation output, and the activation
  // derivatives needed by the backward pass.
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> outputs;
  std::vector<std::vector<double>> d_dz;
  std::vector<std::vector<double>> d_da;
  // Backward scratch.
  std::vector<double> delta;
  std::vector<double> delta_in;
};

struct LayerGradients {
  std::vector<double> weights;
  std::vector<double> biases;
  std::vector<double> frequencies;  // zeros when the frequency is frozen
};

struct Gradients {
  std::vector<LayerGradients> layers;
  std::vector<double> input;  // d loss / d network input
};

class FeedforwardNet {
 public:
  std::vector<DenseLayer> layers;

  FeedforwardNet() = default;
  explicit FeedforwardNet(std::vector<DenseLayer> ls) : layers(std::move(ls)) { validate(); }

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().inputs; }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().outputs; }

  void validate() const {
    if (layers.empty()) throw DimensionMismatch("network has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.weights.size() != l.inputs * l.outputs || l.biases.size() != l.outputs)
        throw DimensionMismatch("layer " + std::to_string(k) + " parameter sizes inconsistent");
      if ((l.activation == Activation::Snake) != (l.frequencies.size() == l.outputs) ||
          (l.activation != Activation::Snake && !l.frequencies.empty()))
        throw DimensionMismatch("layer " + std::to_string(k) + " frequency vector inconsistent");
      for (double a : l.frequencies)
        if (!(a > 0.0)) throw ConfigError("snake frequency must be positive");
      if (k > 0 && layers[k - 1].outputs != l.inputs)
        throw DimensionMismatch("layer " + std::to_string(k) + " does not chain");
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
  }

  /// Flat parameter order per layer: weights, biases, trainable frequencies.
  void read_parameters(std::span<double> out) const {
    std::size_t k = 0;
    for (const auto& l : layers) {
      for (double w : l.weights) out[k++] = w;
      for (double b : l.biases) out[k++] = b;
      if (l.trains_frequencies())
        for (double a : l.frequencies) out[k++] = a;
    }
  }

  void write_parameters(std::span<const double> in) {
    std::size_t k = 0;
    for (auto& l : layers) {
      for (double& w : l.weights) w = in[k++];
      for (double& b : l.biases) b = in[k++];
      if (l.trains_frequencies())
        for (double& a : l.frequencies) a = in[k++];
    }
  }

  std::vector<double> parameters() const {
    std::vector<double> p(parameter_count());
    read_parameters(p);
    return p;
  }

  bool operator==(const FeedforwardNet&) const = default;

  // Scalar-model interface used by the trainer.
  using Workspace = Tape;
  double predict(double x, Tape& tape) const;
  double predict(double x) const {
    Tape t;
    return predict(x, t);
  }
  void backprop(Tape& tape, double dloss_dy, std::span<double> grad) const;
};

/// Forward pass into a reusable tape; returns a view of the output.
inline std::span<const double> forward(const FeedforwardNet& net, std::span<const double> x, Tape& tape) {
  if (x.size() != net.input_size())
    throw DimensionMismatch("input has " + std::to_string(x.size()) + " entries, network expects " +
                            std::to_string(net.input_size()));
  const std::size_t L = net.layers.size();
  tape.inputs.resize(L);
  tape.outputs.resize(L);
  tape.d_dz.resize(L);
  tape.d_da.resize(L);
  for (std::size_t k = 0; k < L; ++k) {
    const auto& l = net.layers[k];
    auto& in = tape.inputs[k];
    if (k == 0) in.assign(x.begin(), x.end());
    else in = tape.outputs[k - 1];
    auto& out = tape.outputs[k];
    auto& dz = tape.d_dz[k];
    auto& da = tape.d_da[k];
    out.resize(l.outputs);
    dz.resize(l.outputs);
    da.resize(l.outputs);
    const bool snake = l.activation == Activation::Snake;
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const double* row = &l.weights[o * l.inputs];
      double z = l.biases[o];
      for (std::size_t i = 0; i < l.inputs; ++i) z += row[i] * in[i];
      const ActivationValue v = activate(l.activation, z, snake ? l.frequencies[o] : 1.0);
      out[o] = v.value;
      dz[o] = v.d_dz;
      da[o] = v.d_da;
    }
  }
  return tape.outputs.back();
}

inline std::pair<std::vector<double>, Tape> forward(const FeedforwardNet& net, std::span<const double> x) {
  Tape tape;
  auto y = forward(net, x, tape);
  return {std::vector<double>(y.begin(), y.end()), std::move(tape)};
}

/// Accumulates d loss / d parameters into `grad` (flat layout of
/// read_parameters) and returns d loss / d input, a view into the tape.
inline std::span<const double> backward_into(const FeedforwardNet& net, Tape& tape,
                                             std::span<const double> loss_grad, std::span<double> grad) {
  const std::size_t L = net.layers.size();
  if (tape.outputs.size() != L || loss_grad.size() != net.output_size())
    throw DimensionMismatch("tape or loss gradient does not match the network");
  std::size_t end = net.parameter_count();
  tape.delta.assign(loss_grad.begin(), loss_grad.end());
  for (std::size_t k = L; k-- > 0;) {
    const auto& l = net.layers[k];
    const auto& in = tape.inputs[k];
    end -= l.parameter_count();
    double* gw = grad.data() + end;
    double* gb = gw + l.weights.size();
    double* ga = gb + l.biases.size();
    tape.delta_in.assign(l.inputs, 0.0);
    for (std::size_t o = 0; o < l.outputs; ++o) {
      const double d_out = tape.delta[o];
      const double d_z = d_out * tape.d_dz[k][o];
      if (l.trains_frequencies()) ga[o] += d_out * tape.d_da[k][o];
      if (d_z == 0.0) continue;
      gb[o] += d_z;
      const double* row = &l.weights[o * l.inputs];
      double* grow = gw + o * l.inputs;
      for (std::size_t i = 0; i < l.inputs; ++i) {
        grow[i] += d_z * in[i];
        tape.delta_in[i] += row[i] * d_z;
      }
    }
    tape.delta.swap(tape.delta_in);
  }
  return tape.delta;
}

/// Structured gradients; frozen snake frequencies get an all-zero slot.
inline Gradients backward(const FeedforwardNet& net, Tape& tape, std::span<const double> loss_grad) {
  std::vector<double> flat(net.parameter_count(), 0.0);
  auto d_input = backward_into(net, tape, loss_grad, flat);
  Gradients g;
  g.input.assign(d_input.begin(), d_input.end());
  std::size_t k = 0;
  for (const auto& l : net.layers) {
    LayerGradients lg;
    lg.weights.assign(flat.begin() + k, flat.begin() + k + l.weights.size());
    k += l.weights.size();
    lg.biases.assign(flat.begin() + k, flat.begin() + k + l.biases.size());
    k += l.biases.size();
    if (l.trains_frequencies()) {
      lg.frequencies.assign(flat.begin() + k, flat.begin() + k + l.frequencies.size());
      k += l.frequencies.size();
    } else {
      lg.frequencies.assign(l.frequencies.size(), 0.0);
    }
    g.layers.push_back(std::move(lg));
  }
  return g;
}

inline double FeedforwardNet::predict(double x, Tape& tape) const {
  const double in[1] = {x};
  return forward(*this, in, tape)[0];
}

inline void FeedforwardNet::backprop(Tape& tape, double dloss_dy, std::span<double> grad) const {
  const double g[1] = {dloss_dy};
  backward_into(*this, tape, g, grad);
}

/// The two-layer regressor used for activation baselines: 1 -> width
/// (activation) -> 1 (linear).
inline FeedforwardNet make_regressor(Activation act, std::size_t width, std::uint64_t seed,
                                     std::optional<double> snake_frequency = std::nullopt,
                                     bool trainable_frequency = false) {
  Rng rng(seed);
  DenseLayer hidden = glorot_layer(width, 1, act, rng);
  if (act == Activation::Snake) {
    hidden.trainable_frequency = trainable_frequency;
    if (snake_frequency) hidden.frequencies.assign(width, *snake_frequency);
  }
  DenseLayer out = glorot_layer(1, width, Activation::Linear, rng);
  return FeedforwardNet({std::move(hidden), std::move(out)});
}

// Checkpoints: JSON with layer dims, activation names and every parameter.
// Doubles serialize in shortest round-trip form, so reloads are bit-exact.

inline nlohmann::json net_to_json(const FeedforwardNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"inputs", l.inputs},
                      {"outputs", l.outputs},
                      {"activation", std::string(to_string(l.activation))},
                      {"trainable_frequency", l.trainable_frequency},
                      {"weights", l.weights},
                      {"biases", l.biases},
                      {"frequencies", l.frequencies}});
  }
  return {{"type", "feedforward"}, {"layers", layers}};
}

inline FeedforwardNet net_from_json(const nlohmann::json& j) {
  try {
    std::vector<DenseLayer> layers;
    for (const auto& jl : j.at("layers")) {
      DenseLayer l;
      l.inputs = jl.at("inputs").get<std::size_t>();
      l.outputs = jl.at("outputs").get<std::size_t>();
      auto act = activation_from_string(jl.at("activation").get<std::string>());
      if (!act) throw ParseError("unknown activation '" + jl.at("activation").get<std::string>() + "'");
      l.activation = *act;
      l.trainable_frequency = jl.at("trainable_frequency").get<bool>();
      l.weights = jl.at("weights").get<std::vector<double>>();
      l.biases = jl.at("biases").get<std::vector<double>>();
      l.frequencies = jl.at("frequencies").get<std::vector<double>>();
      layers.push_back(std::move(l));
    }
    return FeedforwardNet(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network checkpoint: ") + e.what());
  }
}

}  // namespace perigen
