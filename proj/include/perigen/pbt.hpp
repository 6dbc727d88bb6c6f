#pragma once

// Evolutionary population-based training over a genetic period parameter.
//
// A unit predicts composer(trend(x), periodicity(x mod p)). Each generation
// trains the untrained units, selects reproducers (n-fittest or
// Pareto-score sampling), tops the reproducers up to a floor of distinct
// root ancestors, and spawns children whose period is placed between a
// reproducer and its nearest neighbours in p, weighted by fitness. Children
// start from a clone of the central parent's trained weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "perigen/errors.hpp"
#include "perigen/nets.hpp"
#include "perigen/parallel.hpp"
#include "perigen/rng.hpp"
#include "perigen/signals.hpp"
#include "perigen/text.hpp"
#include "perigen/train.hpp"

namespace perigen {

/// x - p floor(x / p), in [0, p).
inline double floor_mod(double x, double p) {
  double r = x - p * std::floor(x / p);
  if (r >= p) r -= p;  // rounding can land exactly on p
  if (r < 0.0) r = 0.0;
  return r;
}

inline constexpr double kUnsetLoss = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kFailedLoss = std::numeric_limits<double>::infinity();

struct UnitWorkspace {
  Tape trend, periodicity, composer;
};

struct PopulationUnit {
  int id = 0;
  double period = 1.0;  // genetic period parameter p
  FeedforwardNet trend;        // 1 -> 1 linear
  FeedforwardNet periodicity;  // 1 -> hidden (ReLU) -> 1 linear
  FeedforwardNet composer;     // (trend_out, periodicity_out) -> 1 linear
  double loss = kUnsetLoss;    // validation loss; set iff trained
  int root_ancestor = 0;
  int generation = 0;
  bool trained = false;

  using Workspace = UnitWorkspace;

  double predict(double x, UnitWorkspace& ws) const {
    const double t_in[1] = {x};
    const double p_in[1] = {floor_mod(x, period)};
    const double c_in[2] = {forward(trend, t_in, ws.trend)[0], forward(periodicity, p_in, ws.periodicity)[0]};
    return forward(composer, c_in, ws.composer)[0];
  }

  double predict(double x) const {
    UnitWorkspace ws;
    return predict(x, ws);
  }

  double operator()(double x) const { return predict(x); }

  void backprop(UnitWorkspace& ws, double dloss_dy, std::span<double> grad) const {
    const std::size_t nt = trend.parameter_count(), np = periodicity.parameter_count();
    const double g[1] = {dloss_dy};
    auto d_in = backward_into(composer, ws.composer, g, grad.subspan(nt + np));
    const double d_trend[1] = {d_in[0]};
    const double d_period[1] = {d_in[1]};
    backward_into(trend, ws.trend, d_trend, grad.subspan(0, nt));
    backward_into(periodicity, ws.periodicity, d_period, grad.subspan(nt, np));
  }

  std::size_t parameter_count() const {
    return trend.parameter_count() + periodicity.parameter_count() + composer.parameter_count();
  }

  void read_parameters(std::span<double> out) const {
    const std::size_t nt = trend.parameter_count(), np = periodicity.parameter_count();
    trend.read_parameters(out.subspan(0, nt));
    periodicity.read_parameters(out.subspan(nt, np));
    composer.read_parameters(out.subspan(nt + np));
  }

  void write_parameters(std::span<const double> in) {
    const std::size_t nt = trend.parameter_count(), np = periodicity.parameter_count();
    trend.write_parameters(in.subspan(0, nt));
    periodicity.write_parameters(in.subspan(nt, np));
    composer.write_parameters(in.subspan(nt + np));
  }

  bool operator==(const PopulationUnit& o) const {
    auto same_loss = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return id == o.id && period == o.period && trend == o.trend && periodicity == o.periodicity &&
           composer == o.composer && same_loss(loss, o.loss) && root_ancestor == o.root_ancestor &&
           generation == o.generation && trained == o.trained;
  }
};

inline constexpr double kHiddenSlope = 5.0;

inline PopulationUnit make_unit(int id, double period, std::size_t hidden_width, std::uint64_t seed) {
  Rng rng(seed);
  PopulationUnit u;
  u.id = id;
  u.period = period;
  u.root_ancestor = id;
  u.trend = FeedforwardNet({glorot_layer(1, 1, Activation::Linear, rng)});
  DenseLayer hidden = glorot_layer(hidden_width, 1, Activation::ReLU, rng);
  // The periodicity input lies in [0, p). Slopes are scaled to the period so
  // sharp edges are reachable, and each ReLU kink is placed uniformly inside
  // the period rather than at 0.
  const double slope = kHiddenSlope / period;
  for (std::size_t o = 0; o < hidden_width; ++o) {
    hidden.weights[o] = uniform(rng, -slope, slope);
    hidden.biases[o] = -hidden.weights[o] * uniform(rng, 0.0, period);
  }
  u.periodicity = FeedforwardNet({std::move(hidden), glorot_layer(1, hidden_width, Activation::Linear, rng)});
  u.composer = FeedforwardNet({glorot_layer(1, 2, Activation::Linear, rng)});
  return u;
}

enum class SelectionMode { NFittest, Pareto };

inline std::string_view to_string(SelectionMode m) { return m == SelectionMode::NFittest ? "nfittest" : "pareto"; }

struct PBTConfig {
  double range_lo = 0.5;  // r_a
  double range_hi = 1.0;  // r_b
  int root_count = 8;     // n_r
  int reproducers = 7;    // n_g
  int diversity_floor = 3;  // n_e
  double score_scale = 1.0;  // S
  int max_generations = 10;
  double fitness_threshold = 0.0;
  std::size_t hidden_width = 60;
  TrainConfig train;
  OptimizerSpec optimizer = OptimizerSpec::defaults(OptimizerKind::Adam);
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    if (!(range_lo > 0.0 && range_lo < range_hi)) throw ConfigError("need 0 < r_a < r_b");
    if (root_count < 2) throw ConfigError("root count n_r must be >= 2");
    if (reproducers < 1 || reproducers > root_count) throw ConfigError("need 1 <= n_g <= n_r");
    if (diversity_floor < 0 || diversity_floor > root_count) throw ConfigError("need n_e <= n_r");
    if (!(score_scale > 0.0)) throw ConfigError("score scale S must be positive");
    if (max_generations < 0) throw ConfigError("max_generations must be >= 0");
    if (hidden_width < 1) throw ConfigError("hidden width must be >= 1");
    train.validate();
    optimizer.validate();
  }
};

struct Population {
  std::vector<PopulationUnit> units;
  int generation = 0;

  const PopulationUnit& by_id(int id) const {
    for (const auto& u : units)
      if (u.id == id) return u;
    throw Error("no unit with id " + std::to_string(id));
  }
};

/// n_r roots with periods evenly spaced on [r_a, r_b], endpoints included.
inline Population init_roots(const PBTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Population pop;
  const int n = cfg.root_count;
  for (int i = 0; i < n; ++i) {
    const double p = i == n - 1 ? cfg.range_hi : cfg.range_lo + i * (cfg.range_hi - cfg.range_lo) / (n - 1);
    pop.units.push_back(make_unit(i, p, cfg.hidden_width, derive_seed(seed, {0x1417, static_cast<std::uint64_t>(i)})));
  }
  return pop;
}

/// Trains every untrained unit on the training samples; divergent units get
/// an infinite loss and are never preferred.
inline void train_untrained(Population& pop, std::span<const Sample> data, const PBTConfig& cfg) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pop.units.size(); ++i)
    if (!pop.units[i].trained) todo.push_back(i);
  parallel_for(todo.size(), resolve_jobs(cfg.jobs), [&](std::size_t k) {
    PopulationUnit& u = pop.units[todo[k]];
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, {0x7a11, static_cast<std::uint64_t>(u.id)});
    try {
      u.loss = train(u, data, tc, cfg.optimizer).validation_loss;
    } catch (const NonFiniteLoss&) {
      u.loss = kFailedLoss;
    }
    u.trained = true;
  });
}

namespace detail {

// Lower loss first; equal losses prefer the younger (later-born) unit.
inline bool fitter(const PopulationUnit& a, const PopulationUnit& b) {
  if (a.loss != b.loss) return a.loss < b.loss;
  if (a.generation != b.generation) return a.generation > b.generation;
  return a.id > b.id;
}

inline void require_trained(const Population& pop) {
  for (const auto& u : pop.units)
    if (!u.trained) throw Error("unit " + std::to_string(u.id) + " is untrained");
}

}  // namespace detail

/// Ids of the n_g least-loss units, ties toward the younger. Failed units
/// are never selected.
inline std::vector<int> select_nfittest(const Population& pop, int n_g) {
  detail::require_trained(pop);
  std::vector<const PopulationUnit*> sorted;
  for (const auto& u : pop.units)
    if (std::isfinite(u.loss)) sorted.push_back(&u);
  std::ranges::sort(sorted, [](auto* a, auto* b) { return detail::fitter(*a, *b); });
  std::vector<int> ids;
  for (int i = 0; i < n_g && i < static_cast<int>(sorted.size()); ++i) ids.push_back(sorted[i]->id);
  return ids;
}

/// s = S sqrt(g) / (1 + mu)^(1 + S sqrt(g)), mu the loss min-max normalized
/// over the population. Failed units take mu = 1; a flat loss range gives
/// mu = 0 everywhere.
inline std::vector<double> pareto_scores(const Population& pop, int generation, double score_scale) {
  if (generation < 1) throw ConfigError("Pareto scores are defined for generations g >= 1");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& u : pop.units)
    if (std::isfinite(u.loss)) {
      lo = std::min(lo, u.loss);
      hi = std::max(hi, u.loss);
    }
  const double k = score_scale * std::sqrt(static_cast<double>(generation));
  std::vector<double> scores;
  for (const auto& u : pop.units) {
    double mu = 0.0;
    if (!std::isfinite(u.loss)) mu = 1.0;
    else if (hi > lo) mu = (u.loss - lo) / (hi - lo);
    scores.push_back(k / std::pow(1.0 + mu, 1.0 + k));
  }
  return scores;
}

/// n_g draws without replacement, each proportional to the remaining
/// scores. Falls back to n-fittest when every score is zero.
inline std::vector<int> select_pareto(const Population& pop, std::span<const double> scores, int n_g, Rng& rng) {
  detail::require_trained(pop);
  if (scores.size() != pop.units.size()) throw DimensionMismatch("one score per unit required");
  std::vector<double> w(scores.begin(), scores.end());
  for (double s : w)
    if (!(s >= 0.0)) throw ConfigError("Pareto scores must be non-negative");
  // Failed units keep their score for crossover but are never drawn.
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!std::isfinite(pop.units[i].loss)) w[i] = 0.0;
  std::vector<int> ids;
  const int draws = std::min<int>(n_g, static_cast<int>(w.size()));
  for (int d = 0; d < draws; ++d) {
    double total = 0.0;
    for (double s : w) total += s;
    if (!(total > 0.0)) {
      // Degenerate scores: fill the remaining slots by fitness.
      for (int id : select_nfittest(pop, static_cast<int>(pop.units.size()))) {
        if (static_cast<int>(ids.size()) == draws) break;
        if (std::ranges::find(ids, id) == ids.end()) ids.push_back(id);
      }
      return ids;
    }
    double r = uniform(rng, 0.0, total);
    std::size_t pick = w.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      pick = i;
      if (r < w[i]) break;
      r -= w[i];
    }
    ids.push_back(pop.units[pick].id);
    w[pick] = 0.0;
  }
  return ids;
}

/// Appends least-loss units with root ancestors new to the set until the
/// reproducers span n_e distinct ancestors.
inline std::vector<int> enforce_root_diversity(std::vector<int> chosen, const Population& pop, int n_e) {
  std::set<int> all_roots;
  for (const auto& u : pop.units) all_roots.insert(u.root_ancestor);
  if (static_cast<int>(all_roots.size()) < n_e)
    throw InsufficientDiversity("population has " + std::to_string(all_roots.size()) +
                                " root ancestors, fewer than n_e = " + std::to_string(n_e));
  std::set<int> roots;
  for (int id : chosen) roots.insert(pop.by_id(id).root_ancestor);
  while (static_cast<int>(roots.size()) < n_e) {
    const PopulationUnit* best = nullptr;
    for (const auto& u : pop.units) {
      if (!std::isfinite(u.loss) || roots.contains(u.root_ancestor) || std::ranges::find(chosen, u.id) != chosen.end())
        continue;
      if (!best || detail::fitter(u, *best)) best = &u;
    }
    if (!best) break;
    chosen.push_back(best->id);
    roots.insert(best->root_ancestor);
  }
  return chosen;
}

struct Neighbours {
  std::optional<int> lower;  // largest p strictly below
  std::optional<int> upper;  // smallest p strictly above
};

inline Neighbours neighbor_parents(const PopulationUnit& centre, const Population& pop) {
  Neighbours n;
  const PopulationUnit* lo = nullptr;
  const PopulationUnit* hi = nullptr;
  for (const auto& u : pop.units) {
    if (u.period < centre.period && (!lo || u.period > lo->period)) lo = &u;
    if (u.period > centre.period && (!hi || u.period < hi->period)) hi = &u;
  }
  if (lo) n.lower = lo->id;
  if (hi) n.upper = hi->id;
  return n;
}

/// Child period for parents with p_i < p_j:
/// p_c = p_i + sigma_i (p_j - p_i), with sigma_i = l_i / (l_i + l_j) for
/// n-fittest and s_j / (s_i + s_j) for Pareto. Both bias the child toward
/// the fitter parent; a zero denominator gives the midpoint.
inline double crossover_param(double p_i, double p_j, double fitness_i, double fitness_j, SelectionMode mode) {
  double sigma = 0.5;
  if (mode == SelectionMode::NFittest) {
    const double li = fitness_i, lj = fitness_j;
    if (std::isinf(li) && std::isinf(lj)) sigma = 0.5;
    else if (std::isinf(li)) sigma = 1.0;
    else if (std::isinf(lj)) sigma = 0.0;
    else if (li + lj > 0.0) sigma = li / (li + lj);
  } else {
    const double si = fitness_i, sj = fitness_j;
    if (si + sj > 0.0) sigma = sj / (si + sj);
  }
  return p_i + sigma * (p_j - p_i);
}

/// Child cloned from the central parent's trained state, untrained, with
/// the given period, ancestry and birth generation.
inline PopulationUnit spawn_offspring(const PopulationUnit& centre, int id, double period, int root_ancestor,
                                      int generation) {
  if (!centre.trained) throw Error("central parent must be trained");
  PopulationUnit c = centre;
  c.id = id;
  c.period = period;
  c.root_ancestor = root_ancestor;
  c.generation = generation;
  c.trained = false;
  c.loss = kUnsetLoss;
  return c;
}

inline const PopulationUnit& best_unit(const Population& pop) {
  if (pop.units.empty()) throw Error("empty population");
  detail::require_trained(pop);
  return *std::ranges::min_element(pop.units, [](const auto& a, const auto& b) { return detail::fitter(a, b); });
}

struct GenerationRecord {
  int generation = 0;
  std::vector<int> reproducers;
  int offspring = 0;
  double best_loss = 0.0;
};

struct EvolutionResult {
  Population population;
  std::vector<GenerationRecord> history;
};

inline EvolutionResult evolve(std::span<const Sample> data, const PBTConfig& cfg, SelectionMode mode) {
  cfg.validate();
  EvolutionResult out;
  Population& pop = out.population;
  pop = init_roots(cfg, cfg.seed);
  train_untrained(pop, data, cfg);
  out.history.push_back({0, {}, 0, best_unit(pop).loss});
  if (best_unit(pop).loss <= cfg.fitness_threshold) return out;

  Rng rng(derive_seed(cfg.seed, {0x5e1ec7}));
  int next_id = static_cast<int>(pop.units.size());
  for (int g = 1; g <= cfg.max_generations; ++g) {
    pop.generation = g;
    std::vector<double> scores;
    std::vector<int> chosen;
    if (mode == SelectionMode::NFittest) {
      chosen = select_nfittest(pop, cfg.reproducers);
    } else {
      scores = pareto_scores(pop, g, cfg.score_scale);
      chosen = select_pareto(pop, scores, cfg.reproducers, rng);
    }
    chosen = enforce_root_diversity(std::move(chosen), pop, cfg.diversity_floor);

    auto score_of = [&](int id) {
      for (std::size_t i = 0; i < pop.units.size(); ++i)
        if (pop.units[i].id == id) return mode == SelectionMode::NFittest ? pop.units[i].loss : scores[i];
      return 0.0;
    };
    std::vector<PopulationUnit> children;
    for (int centre_id : chosen) {
      const PopulationUnit& b2 = pop.by_id(centre_id);
      const Neighbours nb = neighbor_parents(b2, pop);
      auto make_child = [&](const PopulationUnit& lo, const PopulationUnit& hi) {
        const double p = crossover_param(lo.period, hi.period, score_of(lo.id), score_of(hi.id), mode);
        // Pairwise ancestry: the fitter parent's root; ties keep the centre's.
        const PopulationUnit& other = lo.id == b2.id ? hi : lo;
        const int root = detail::fitter(other, b2) && other.loss != b2.loss ? other.root_ancestor : b2.root_ancestor;
        children.push_back(spawn_offspring(b2, next_id++, p, root, g));
      };
      if (nb.lower) make_child(pop.by_id(*nb.lower), b2);
      if (nb.upper) make_child(b2, pop.by_id(*nb.upper));
    }
    const int n_children = static_cast<int>(children.size());
    for (auto& c : children) pop.units.push_back(std::move(c));
    train_untrained(pop, data, cfg);
    const double best = best_unit(pop).loss;
    out.history.push_back({g, chosen, n_children, best});
    if (best <= cfg.fitness_threshold) break;
  }
  return out;
}

// Evolution log: one CSV record per unit.
inline std::string evolution_log_csv(const Population& pop) {
  std::string out = "id,period,loss,ancestor,generation\n";
  for (const auto& u : pop.units) {
    out += std::to_string(u.id) + ',' + text::g17(u.period) + ',' + text::g17(u.loss) + ',' +
           std::to_string(u.root_ancestor) + ',' + std::to_string(u.generation) + '\n';
  }
  return out;
}

struct LogRecord {
  int id = 0;
  double period = 0.0;
  double loss = 0.0;
  int ancestor = 0;
  int generation = 0;
};

inline std::vector<LogRecord> parse_evolution_log(std::string_view csv) {
  std::vector<LogRecord> out;
  std::size_t pos = 0;
  bool header = true;
  while (pos < csv.size()) {
    auto end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    std::string_view line = csv.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line == "\r") continue;
    auto f = text::split(line);
    if (header) {
      if (f != std::vector<std::string>{"id", "period", "loss", "ancestor", "generation"})
        throw ParseError("evolution log: bad header");
      header = false;
      continue;
    }
    if (f.size() != 5) throw ParseError("evolution log: expected 5 columns");
    out.push_back({static_cast<int>(text::parse_int(f[0])), text::parse_double(f[1]), text::parse_double(f[2]),
                   static_cast<int>(text::parse_int(f[3])), static_cast<int>(text::parse_int(f[4]))});
  }
  if (header) throw ParseError("evolution log: empty");
  return out;
}

inline nlohmann::json unit_to_json(const PopulationUnit& u) {
  return {{"type", "population-unit"},
          {"id", u.id},
          {"period", u.period},
          {"loss", std::isfinite(u.loss) ? nlohmann::json(u.loss) : nlohmann::json(nullptr)},
          {"root_ancestor", u.root_ancestor},
          {"generation", u.generation},
          {"trained", u.trained},
          {"composer_inputs", {"trend", "periodicity"}},
          {"trend", net_to_json(u.trend)},
          {"periodicity", net_to_json(u.periodicity)},
          {"composer", net_to_json(u.composer)}};
}

inline PopulationUnit unit_from_json(const nlohmann::json& j) {
  try {
    PopulationUnit u;
    u.id = j.at("id").get<int>();
    u.period = j.at("period").get<double>();
    u.loss = j.at("loss").is_null() ? (j.at("trained").get<bool>() ? kFailedLoss : kUnsetLoss)
                                    : j.at("loss").get<double>();
    u.root_ancestor = j.at("root_ancestor").get<int>();
    u.generation = j.at("generation").get<int>();
    u.trained = j.at("trained").get<bool>();
    u.trend = net_from_json(j.at("trend"));
    u.periodicity = net_from_json(j.at("periodicity"));
    u.composer = net_from_json(j.at("composer"));
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("unit checkpoint: ") + e.what());
  }
}

}  // namespace perigen
