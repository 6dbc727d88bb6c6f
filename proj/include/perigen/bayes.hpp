#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "perigen/errors.hpp"
#include "perigen/pbt.hpp"

namespace perigen {

struct GPPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Gaussian-process regression over a scalar input with a
/// squared-exponential kernel and a constant prior mean.
class GPSurrogate {
 public:
  double length_scale = 1.0;
  double signal_variance = 1.0;
  double noise_variance = 0.0;
  double prior_mean = 0.0;

  GPSurrogate() = default;
  GPSurrogate(double length, double signal, double noise, double mean = 0.0)
      : length_scale(length), signal_variance(signal), noise_variance(noise), prior_mean(mean) {}

  double kernel(double a, double b) const {
    const double d = (a - b) / length_scale;
    return signal_variance * std::exp(-0.5 * d * d);
  }

  /// Factorizes the kernel matrix; retries once with 1e-8 jitter when it is
  /// numerically singular.
  void fit(std::span<const double> ps, std::span<const double> ls) {
    if (ps.size() != ls.size()) throw DimensionMismatch("GP inputs and targets differ in length");
    if (ps.empty()) throw ConfigError("GP needs at least one observation");
    if (!(length_scale > 0.0) || !(signal_variance > 0.0) || !(noise_variance >= 0.0))
      throw ConfigError("GP hyperparameters out of range");
    ps_.assign(ps.begin(), ps.end());
    if (!factor(0.0) && !factor(1e-8)) throw Error("GP kernel matrix is singular");
    const std::size_t n = ps_.size();
    alpha_.resize(n);
    for (std::size_t i = 0; i < n; ++i) alpha_[i] = ls[i] - prior_mean;
    solve_lower(alpha_);
    solve_upper(alpha_);
  }

  std::size_t size() const { return ps_.size(); }

  GPPosterior posterior(double p) const {
    if (ps_.empty()) throw Error("GP has no observations");
    const std::size_t n = ps_.size();
    std::vector<double> k(n);
    for (std::size_t i = 0; i < n; ++i) k[i] = kernel(p, ps_[i]);
    GPPosterior out;
    out.mean = prior_mean;
    for (std::size_t i = 0; i < n; ++i) out.mean += k[i] * alpha_[i];
    solve_lower(k);
    double reduction = 0.0;
    for (double v : k) reduction += v * v;
    out.variance = std::max(0.0, signal_variance - reduction);
    return out;
  }

 private:
  std::vector<double> ps_;
  std::vector<double> chol_;  // lower triangle, row-major n x n
  std::vector<double> alpha_;

  bool factor(double jitter) {
    const std::size_t n = ps_.size();
    chol_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = kernel(ps_[i], ps_[j]);
        if (i == j) s += noise_variance + jitter;
        for (std::size_t k = 0; k < j; ++k) s -= chol_[i * n + k] * chol_[j * n + k];
        if (i == j) {
          if (!(s > 0.0)) return false;
          chol_[i * n + i] = std::sqrt(s);
        } else {
          chol_[i * n + j] = s / chol_[j * n + j];
        }
      }
    }
    return true;
  }

  void solve_lower(std::vector<double>& b) const {
    const std::size_t n = ps_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= chol_[i * n + k] * b[k];
      b[i] = s / chol_[i * n + i];
    }
  }

  void solve_upper(std::vector<double>& b) const {
    const std::size_t n = ps_.size();
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= chol_[k * n + i] * b[k];
      b[i] = s / chol_[i * n + i];
    }
  }
};

/// Expected improvement below best_loss.
inline double expected_improvement(double mean, double variance, double best_loss) {
  const double gain = best_loss - mean;
  if (!(variance > 0.0)) return std::max(0.0, gain);
  const double sigma = std::sqrt(variance);
  const double z = gain / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return std::max(0.0, gain * cdf + sigma * pdf);
}

inline double expected_improvement(const GPSurrogate& gp, double p, double best_loss) {
  const GPPosterior post = gp.posterior(p);
  return expected_improvement(post.mean, post.variance, best_loss);
}

struct BayesConfig {
  double range_lo = 0.5;
  double range_hi = 1.0;
  int initial_design = 8;  // n_r
  int proposals = 7;       // n_g
  int max_generations = 10;
  int grid_points = 1000;
  double fitness_threshold = 0.0;
  double noise_variance = 1e-6;
  std::size_t hidden_width = 60;
  TrainConfig train;
  OptimizerSpec optimizer = OptimizerSpec::defaults(OptimizerKind::Adam);
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    if (!(range_lo > 0.0 && range_lo < range_hi)) throw ConfigError("need 0 < r_a < r_b");
    if (initial_design < 2) throw ConfigError("initial design needs >= 2 points");
    if (proposals < 1) throw ConfigError("proposals per generation must be >= 1");
    if (max_generations < 0) throw ConfigError("max_generations must be >= 0");
    if (grid_points < 2) throw ConfigError("acquisition grid needs >= 2 points");
    if (hidden_width < 1) throw ConfigError("hidden width must be >= 1");
    train.validate();
    optimizer.validate();
  }

  double grid_step() const { return (range_hi - range_lo) / (grid_points - 1); }

  PBTConfig unit_config() const {
    PBTConfig c;
    c.range_lo = range_lo;
    c.range_hi = range_hi;
    c.root_count = initial_design;
    c.reproducers = std::min(proposals, initial_design);
    c.diversity_floor = 0;
    c.max_generations = max_generations;
    c.fitness_threshold = fitness_threshold;
    c.hidden_width = hidden_width;
    c.train = train;
    c.optimizer = optimizer;
    c.seed = seed;
    c.jobs = jobs;
    return c;
  }
};

struct BayesSample {
  double period = 0.0;
  double loss = 0.0;
  int generation = 0;
};

struct BayesTrace {
  std::vector<BayesSample> samples;
  std::vector<double> best_loss;  // after each generation, initial design first

  const BayesSample& best() const {
    if (samples.empty()) throw Error("no samples");
    return *std::ranges::min_element(samples, {}, &BayesSample::loss);
  }
};

/// Surrogate for the observations so far: non-finite losses are replaced by
/// the worst finite one, the prior mean is the mean loss and the signal
/// variance their variance.
inline GPSurrogate fit_surrogate(std::span<const BayesSample> samples, const BayesConfig& cfg) {
  std::vector<double> ps, ls;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples)
    if (std::isfinite(s.loss)) worst = std::max(worst, s.loss);
  if (!std::isfinite(worst)) worst = 1.0;
  for (const auto& s : samples) {
    ps.push_back(s.period);
    ls.push_back(std::isfinite(s.loss) ? s.loss : worst);
  }
  const double n = static_cast<double>(ls.size());
  double mean = 0.0;
  for (double l : ls) mean += l;
  mean /= n;
  double var = 0.0;
  for (double l : ls) var += (l - mean) * (l - mean);
  var /= n;
  GPSurrogate gp((cfg.range_hi - cfg.range_lo) / 4.0, std::max(var, 1e-12), cfg.noise_variance, mean);
  gp.fit(ps, ls);
  return gp;
}

/// The next batch of periods: grid points ranked by expected improvement
/// (ties by posterior variance, then smaller p), skipping any point closer
/// than one grid step to an already sampled or proposed period.
inline std::vector<double> propose_periods(const GPSurrogate& gp, std::span<const BayesSample> samples,
                                           const BayesConfig& cfg) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) best = std::min(best, s.loss);
  if (!std::isfinite(best)) best = gp.prior_mean;
  const double h = cfg.grid_step();
  struct Candidate {
    double p, ei, var;
  };
  std::vector<Candidate> cands;
  for (int i = 0; i < cfg.grid_points; ++i) {
    const double p = i == cfg.grid_points - 1 ? cfg.range_hi : cfg.range_lo + i * h;
    const GPPosterior post = gp.posterior(p);
    cands.push_back({p, expected_improvement(post.mean, post.variance, best), post.variance});
  }
  std::ranges::stable_sort(cands, [](const Candidate& a, const Candidate& b) {
    if (a.ei != b.ei) return a.ei > b.ei;
    return a.var > b.var;
  });
  std::vector<double> taken;
  for (const auto& s : samples) taken.push_back(s.period);
  std::vector<double> out;
  const double min_gap = h * (1.0 - 1e-9);
  for (const auto& c : cands) {
    if (static_cast<int>(out.size()) == cfg.proposals) break;
    const bool clear = std::ranges::all_of(taken, [&](double t) { return std::abs(t - c.p) >= min_gap; });
    if (!clear) continue;
    out.push_back(c.p);
    taken.push_back(c.p);
  }
  return out;
}

/// Generic loop: evaluate the initial design, then per generation fit the
/// surrogate and evaluate a batch of EI proposals. The objective maps a
/// batch of periods to their losses.
inline BayesTrace bayes_search(const BayesConfig& cfg,
                               const std::function<std::vector<double>(std::span<const double>, int)>& objective) {
  cfg.validate();
  BayesTrace trace;
  auto record = [&](std::span<const double> ps, int generation) {
    const std::vector<double> ls = objective(ps, generation);
    if (ls.size() != ps.size()) throw DimensionMismatch("objective returned the wrong number of losses");
    for (std::size_t i = 0; i < ps.size(); ++i) trace.samples.push_back({ps[i], ls[i], generation});
    trace.best_loss.push_back(trace.best().loss);
  };
  std::vector<double> design;
  const int n = cfg.initial_design;
  for (int i = 0; i < n; ++i)
    design.push_back(i == n - 1 ? cfg.range_hi : cfg.range_lo + i * (cfg.range_hi - cfg.range_lo) / (n - 1));
  record(design, 0);
  for (int g = 1; g <= cfg.max_generations; ++g) {
    if (trace.best().loss <= cfg.fitness_threshold) break;
    const GPSurrogate gp = fit_surrogate(trace.samples, cfg);
    const std::vector<double> next = propose_periods(gp, trace.samples, cfg);
    if (next.empty()) break;
    record(next, g);
  }
  return trace;
}

/// Bayesian optimization of the unit period: every sampled period trains
/// one population unit, and its training loss is the objective.
inline Population bayes_optimize(std::span<const Sample> data, const BayesConfig& cfg) {
  const PBTConfig unit_cfg = cfg.unit_config();
  Population pop;
  bayes_search(cfg, [&](std::span<const double> ps, int generation) {
    const std::size_t first = pop.units.size();
    for (double p : ps) {
      const int id = static_cast<int>(pop.units.size());
      PopulationUnit u =
          make_unit(id, p, cfg.hidden_width, derive_seed(cfg.seed, {0x1417, static_cast<std::uint64_t>(id)}));
      u.generation = generation;
      pop.units.push_back(std::move(u));
    }
    pop.generation = generation;
    train_untrained(pop, data, unit_cfg);
    std::vector<double> ls;
    for (std::size_t i = first; i < pop.units.size(); ++i) ls.push_back(pop.units[i].loss);
    return ls;
  });
  return pop;
}

}  // namespace perigen
