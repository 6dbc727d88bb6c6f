#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "perigen/errors.hpp"

namespace perigen {

enum class OptimizerKind { SGD, RMSprop, Adam, AdaMax, AdaDelta, Nadam };

inline constexpr OptimizerKind kAllOptimizers[] = {OptimizerKind::SGD,    OptimizerKind::RMSprop,
                                                   OptimizerKind::Adam,   OptimizerKind::AdaMax,
                                                   OptimizerKind::AdaDelta, OptimizerKind::Nadam};

inline std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::RMSprop: return "rmsprop";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::AdaMax: return "adamax";
    case OptimizerKind::AdaDelta: return "adadelta";
    case OptimizerKind::Nadam: return "nadam";
  }
  return "?";
}

inline std::optional<OptimizerKind> optimizer_from_string(std::string_view s) {
  for (OptimizerKind k : kAllOptimizers)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;    // Adam, AdaMax, Nadam first moment
  double beta2 = 0.999;  // Adam, AdaMax, Nadam second moment
  double rho = 0.9;      // RMSprop, AdaDelta decay
  double epsilon = 1e-8;

  static OptimizerSpec defaults(OptimizerKind kind) {
    OptimizerSpec s;
    s.kind = kind;
    switch (kind) {
      case OptimizerKind::SGD: s.learning_rate = 1e-2; break;
      case OptimizerKind::RMSprop: s.epsilon = 1e-7; break;
      // The canonical AdaDelta rule has no step size; 1.0 reproduces it.
      case OptimizerKind::AdaDelta:
        s.learning_rate = 1.0;
        s.rho = 0.95;
        s.epsilon = 1e-6;
        break;
      default: break;
    }
    return s;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    for (double d : {beta1, beta2, rho})
      if (!(d > 0.0 && d < 1.0)) throw ConfigError("decay parameters must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  }
};

/// Optimizer state (moments, accumulators, step count) for one parameter
/// vector. Update rules follow the published forms of each method.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec, std::size_t n = 0) : spec_(spec) {
    spec_.validate();
    resize(n);
  }

  void resize(std::size_t n) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    t_ = 0;
  }

  const OptimizerSpec& spec() const { return spec_; }
  long steps() const { return t_; }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw DimensionMismatch("parameter/gradient size mismatch");
    if (m_.size() != params.size()) resize(params.size());
    ++t_;
    const double lr = spec_.learning_rate, b1 = spec_.beta1, b2 = spec_.beta2, rho = spec_.rho,
                 eps = spec_.epsilon;
    const double t = static_cast<double>(t_);
    switch (spec_.kind) {
      case OptimizerKind::SGD:
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
        break;
      case OptimizerKind::RMSprop:
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = grads[i];
          v_[i] = rho * v_[i] + (1.0 - rho) * g * g;
          params[i] -= lr * g / (std::sqrt(v_[i]) + eps);
        }
        break;
      case OptimizerKind::Adam: {
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = grads[i];
          m_[i] = b1 * m_[i] + (1.0 - b1) * g;
          v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
          params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
        break;
      }
      case OptimizerKind::AdaMax: {
        const double c1 = 1.0 - std::pow(b1, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = grads[i];
          m_[i] = b1 * m_[i] + (1.0 - b1) * g;
          v_[i] = std::max(b2 * v_[i], std::abs(g));
          params[i] -= (lr / c1) * m_[i] / (v_[i] + eps);
        }
        break;
      }
      case OptimizerKind::AdaDelta:
        // m_ holds E[g^2], v_ holds E[dx^2].
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = grads[i];
          m_[i] = rho * m_[i] + (1.0 - rho) * g * g;
          const double dx = -std::sqrt(v_[i] + eps) / std::sqrt(m_[i] + eps) * g;
          v_[i] = rho * v_[i] + (1.0 - rho) * dx * dx;
          params[i] += lr * dx;
        }
        break;
      case OptimizerKind::Nadam: {
        const double b1t = std::pow(b1, t), b1t1 = b1t * b1, c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = grads[i];
          m_[i] = b1 * m_[i] + (1.0 - b1) * g;
          v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
          const double m_hat = b1 * m_[i] / (1.0 - b1t1) + (1.0 - b1) * g / (1.0 - b1t);
          params[i] -= lr * m_hat / (std::sqrt(v_[i] / c2) + eps);
        }
        break;
      }
    }
  }

 private:
  OptimizerSpec spec_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace perigen
