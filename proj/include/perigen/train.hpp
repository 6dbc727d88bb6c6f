#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "perigen/errors.hpp"
#include "perigen/optim.hpp"
#include "perigen/rng.hpp"
#include "perigen/signals.hpp"

namespace perigen {

/// A scalar regressor trainable by gradient descent: predict() records
/// whatever backprop() needs in a caller-owned workspace, backprop()
/// accumulates into a flat gradient laid out like read_parameters().
template <class M>
concept ScalarModel = requires(M& m, const M& cm, typename M::Workspace& ws, double x,
                               std::span<double> out, std::span<const double> in) {
  { cm.predict(x, ws) } -> std::convertible_to<double>;
  cm.backprop(ws, x, out);
  { cm.parameter_count() } -> std::convertible_to<std::size_t>;
  cm.read_parameters(out);
  m.write_parameters(in);
};

struct TrainConfig {
  double validation_fraction = 0.2;
  int patience = 10;
  int max_epochs = 500;
  int batch_size = 32;
  std::uint64_t seed = 0;
  // When positive, fresh N(0, variance) noise is added to the training
  // targets every epoch instead of once at dataset creation.
  double epoch_noise_variance = 0.0;

  void validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("validation fraction must lie in (0, 1)");
    if (patience < 1 || max_epochs < 1 || batch_size < 1)
      throw ConfigError("patience, max_epochs and batch_size must be positive");
  }
};

/// Stops once `patience` consecutive epochs fail to improve strictly on
/// the best loss seen.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one epoch's loss; true when training should stop.
  bool update(double loss) {
    ++epoch_;
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epoch_;
      stale_ = 0;
      improved_ = true;
    } else {
      ++stale_;
      improved_ = false;
    }
    return stale_ >= patience_;
  }

  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epoch() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  double validation_loss = std::numeric_limits<double>::infinity();  // best epoch
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> validation_history;
};

template <ScalarModel M>
double mean_squared_error(const M& model, std::span<const Sample> data) {
  typename M::Workspace ws;
  double sum = 0.0;
  for (const auto& s : data) {
    const double e = model.predict(s.x, ws) - s.y;
    sum += e * e;
  }
  return sum / static_cast<double>(data.size());
}

/// Mini-batch MSE training with a seeded train/validation split and early
/// stopping. The model is left holding the best-validation parameters.
template <ScalarModel M>
TrainResult train(M& model, std::span<const Sample> data, const TrainConfig& cfg, const OptimizerSpec& opt) {
  cfg.validate();
  if (data.size() < 2) throw ConfigError("training needs at least two samples");
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * data.size()));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  std::vector<Sample> val, fit;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : fit).push_back(data[order[i]]);
  std::vector<double> clean_y;
  for (const auto& s : fit) clean_y.push_back(s.y);

  const std::size_t n_params = model.parameter_count();
  std::vector<double> params(n_params), grad(n_params), best(n_params);
  model.read_parameters(params);
  best = params;
  Optimizer optimizer(opt, n_params);
  EarlyStopping stopper(cfg.patience);
  typename M::Workspace ws;
  std::normal_distribution<double> noise(0.0, 1.0);
  const double noise_sigma = std::sqrt(std::max(0.0, cfg.epoch_noise_variance));

  TrainResult result;
  std::vector<std::size_t> idx(fit.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (noise_sigma > 0.0)
      for (std::size_t i = 0; i < fit.size(); ++i) fit[i].y = clean_y[i] + noise_sigma * noise(rng);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < idx.size(); start += batch) {
      const std::size_t stop = std::min(idx.size(), start + batch);
      const double scale = 2.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const Sample& s = fit[idx[b]];
        const double y_hat = model.predict(s.x, ws);
        model.backprop(ws, scale * (y_hat - s.y), grad);
      }
      optimizer.step(params, grad);
      model.write_parameters(params);
    }

    const double loss = mean_squared_error(model, std::span<const Sample>(val));
    if (!std::isfinite(loss)) {
      model.write_parameters(best);
      throw NonFiniteLoss("validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.validation_history.push_back(loss);
    const bool stop = stopper.update(loss);
    if (stopper.improved()) best = params;
    result.epochs_run = epoch;
    if (stop) break;
  }
  model.write_parameters(best);
  result.validation_loss = stopper.best();
  result.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace perigen
