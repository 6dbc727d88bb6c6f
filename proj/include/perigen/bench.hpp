#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "perigen/bayes.hpp"
#include "perigen/errors.hpp"
#include "perigen/form_io.hpp"
#include "perigen/metrics.hpp"
#include "perigen/nets.hpp"
#include "perigen/parallel.hpp"
#include "perigen/pbt.hpp"
#include "perigen/signals.hpp"
#include "perigen/text.hpp"

namespace perigen {

enum class Scenario { Noiseless, Noisy, Trend };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Noiseless: return "noiseless";
    case Scenario::Noisy: return "noisy";
    case Scenario::Trend: return "trend";
  }
  return "?";
}

inline Scenario scenario_from_string(std::string_view s) {
  for (Scenario c : {Scenario::Noiseless, Scenario::Noisy, Scenario::Trend})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

enum class ModelKind { Sin, Cos, SinPlusCos, XPlusSin, XPlusCos, Snake, TSnake, Bayes, NFittest, Pareto };

inline constexpr ModelKind kAllModels[] = {ModelKind::Sin,      ModelKind::Cos,    ModelKind::SinPlusCos,
                                           ModelKind::XPlusSin, ModelKind::XPlusCos, ModelKind::Snake,
                                           ModelKind::TSnake,   ModelKind::Bayes,  ModelKind::NFittest,
                                           ModelKind::Pareto};

inline std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Sin: return "sin";
    case ModelKind::Cos: return "cos";
    case ModelKind::SinPlusCos: return "sin+cos";
    case ModelKind::XPlusSin: return "x+sin";
    case ModelKind::XPlusCos: return "x+cos";
    case ModelKind::Snake: return "snake";
    case ModelKind::TSnake: return "t-snake";
    case ModelKind::Bayes: return "bayes";
    case ModelKind::NFittest: return "nfittest";
    case ModelKind::Pareto: return "pareto";
  }
  return "?";
}

inline ModelKind model_from_string(std::string_view s) {
  for (ModelKind m : kAllModels)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown model '" + std::string(s) + "'");
}

inline bool is_population_model(ModelKind m) {
  return m == ModelKind::Bayes || m == ModelKind::NFittest || m == ModelKind::Pareto;
}

/// Position in the canonical report order; unknown names sort last.
inline std::size_t model_rank(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kAllModels); ++i)
    if (to_string(kAllModels[i]) == name) return i;
  return std::size(kAllModels);
}

struct ExperimentSpec {
  Scenario scenario = Scenario::Noiseless;
  double noise_variance = 0.15;  // used by the noisy scenario only
  bool per_epoch_noise = false;
  bool include_tangent = false;
  TrendForm::Kind trend_kind = TrendForm::Kind::Polynomial;
  int trend_order = 1;
  int variants = 10;
  int repeats = 5;
  int train_periods = 5;
  int eval_periods = 10;
  int sampling_rate = 100;
  double alpha = 1.0;
  double epsilon = 0.05;
  int grid_samples = 21;
  std::vector<std::string> forms;  // skeleton expressions; empty means every order <= 2 sum/product form
  std::vector<ModelKind> models{std::begin(kAllModels), std::end(kAllModels)};
  std::vector<OptimizerKind> optimizers{std::begin(kAllOptimizers), std::end(kAllOptimizers)};
  std::size_t width = 64;
  TrainConfig train;
  int generations = 10;
  int root_count = 8;
  int reproducers = 7;
  int diversity_floor = 3;
  double range_lo = 0.5;
  double range_hi = 1.0;
  double score_scale = 1.0;
  std::size_t unit_hidden = 60;
  std::uint64_t seed = 0;
  int jobs = 0;

  void validate() const {
    if (variants < 1) throw ConfigError("num_variants must be >= 1");
    if (repeats < 1) throw ConfigError("num_repeats must be >= 1");
    if (eval_periods <= train_periods || train_periods < 1) throw ConfigError("need 1 <= n_T < n_E");
    if (sampling_rate < 1) throw ConfigError("sampling_rate must be >= 1");
    if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be non-negative");
    if (trend_order < 0) throw ConfigError("trend order must be non-negative");
    if (models.empty() || optimizers.empty()) throw ConfigError("model and optimizer rosters must be non-empty");
    if (width < 1 || unit_hidden < 1) throw ConfigError("layer widths must be positive");
    metric_config(Domain{train_periods, eval_periods, 1.0}).validate();
    train.validate();
    pbt_config(0).validate();
  }

  double effective_noise() const { return scenario == Scenario::Noisy ? noise_variance : 0.0; }

  MetricConfig metric_config(const Domain& d) const {
    MetricConfig c = MetricConfig::for_domain(d);
    c.alpha = alpha;
    c.epsilon = epsilon;
    c.grid_samples = grid_samples;
    return c;
  }

  PBTConfig pbt_config(std::uint64_t unit_seed) const {
    PBTConfig c;
    c.range_lo = range_lo;
    c.range_hi = range_hi;
    c.root_count = root_count;
    c.reproducers = reproducers;
    c.diversity_floor = diversity_floor;
    c.score_scale = score_scale;
    c.max_generations = generations;
    c.hidden_width = unit_hidden;
    c.train = train;
    c.seed = unit_seed;
    c.jobs = 1;
    return c;
  }

  BayesConfig bayes_config(std::uint64_t unit_seed) const {
    BayesConfig c;
    c.range_lo = range_lo;
    c.range_hi = range_hi;
    c.initial_design = root_count;
    c.proposals = reproducers;
    c.max_generations = generations;
    c.hidden_width = unit_hidden;
    c.train = train;
    c.seed = unit_seed;
    c.jobs = 1;
    return c;
  }

  VariantOptions variant_options() const {
    VariantOptions o;
    o.trend_order = trend_order;
    o.noise_variance = effective_noise();
    o.train_periods = train_periods;
    o.eval_periods = eval_periods;
    o.sampling_rate = sampling_rate;
    return o;
  }
};

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["scenario"] = std::string(to_string(s.scenario));
  j["noise_variance"] = s.noise_variance;
  j["per_epoch_noise"] = s.per_epoch_noise;
  j["include_tangent"] = s.include_tangent;
  j["trend_kind"] = std::string(to_string(s.trend_kind));
  j["trend_order"] = s.trend_order;
  j["num_variants"] = s.variants;
  j["num_repeats"] = s.repeats;
  j["n_T"] = s.train_periods;
  j["n_E"] = s.eval_periods;
  j["sampling_rate"] = s.sampling_rate;
  j["alpha"] = s.alpha;
  j["epsilon"] = s.epsilon;
  j["grid_samples"] = s.grid_samples;
  j["forms"] = s.forms;
  std::vector<std::string> models, opts;
  for (auto m : s.models) models.emplace_back(to_string(m));
  for (auto o : s.optimizers) opts.emplace_back(to_string(o));
  j["models"] = models;
  j["optimizers"] = opts;
  j["width"] = s.width;
  j["validation_fraction"] = s.train.validation_fraction;
  j["patience"] = s.train.patience;
  j["max_epochs"] = s.train.max_epochs;
  j["batch_size"] = s.train.batch_size;
  j["generations"] = s.generations;
  j["n_r"] = s.root_count;
  j["n_g"] = s.reproducers;
  j["n_e"] = s.diversity_floor;
  j["r_a"] = s.range_lo;
  j["r_b"] = s.range_hi;
  j["score_scale"] = s.score_scale;
  j["unit_hidden"] = s.unit_hidden;
  j["seed"] = s.seed;
  return j;
}

/// Reads a config document over the defaults. Unknown keys are rejected so
/// typos do not silently fall back to defaults.
inline ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec s = {}) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "scenario") s.scenario = scenario_from_string(v.get<std::string>());
      else if (key == "noise_variance") s.noise_variance = v.get<double>();
      else if (key == "per_epoch_noise") s.per_epoch_noise = v.get<bool>();
      else if (key == "include_tangent") s.include_tangent = v.get<bool>();
      else if (key == "trend_kind") {
        const auto k = v.get<std::string>();
        if (k == "polynomial") s.trend_kind = TrendForm::Kind::Polynomial;
        else if (k == "exponential") s.trend_kind = TrendForm::Kind::Exponential;
        else throw ConfigError("unknown trend kind '" + k + "'");
      } else if (key == "trend_order") s.trend_order = v.get<int>();
      else if (key == "num_variants") s.variants = v.get<int>();
      else if (key == "num_repeats") s.repeats = v.get<int>();
      else if (key == "n_T") s.train_periods = v.get<int>();
      else if (key == "n_E") s.eval_periods = v.get<int>();
      else if (key == "sampling_rate") s.sampling_rate = v.get<int>();
      else if (key == "alpha") s.alpha = v.get<double>();
      else if (key == "epsilon") s.epsilon = v.get<double>();
      else if (key == "grid_samples") s.grid_samples = v.get<int>();
      else if (key == "forms") s.forms = v.get<std::vector<std::string>>();
      else if (key == "models") {
        s.models.clear();
        for (const auto& m : v.get<std::vector<std::string>>()) s.models.push_back(model_from_string(m));
      } else if (key == "optimizers") {
        s.optimizers.clear();
        for (const auto& o : v.get<std::vector<std::string>>()) {
          auto k = optimizer_from_string(o);
          if (!k) throw ConfigError("unknown optimizer '" + o + "'");
          s.optimizers.push_back(*k);
        }
      } else if (key == "width") s.width = v.get<std::size_t>();
      else if (key == "validation_fraction") s.train.validation_fraction = v.get<double>();
      else if (key == "patience") s.train.patience = v.get<int>();
      else if (key == "max_epochs") s.train.max_epochs = v.get<int>();
      else if (key == "batch_size") s.train.batch_size = v.get<int>();
      else if (key == "generations") s.generations = v.get<int>();
      else if (key == "n_r") s.root_count = v.get<int>();
      else if (key == "n_g") s.reproducers = v.get<int>();
      else if (key == "n_e") s.diversity_floor = v.get<int>();
      else if (key == "r_a") s.range_lo = v.get<double>();
      else if (key == "r_b") s.range_hi = v.get<double>();
      else if (key == "score_scale") s.score_scale = v.get<double>();
      else if (key == "unit_hidden") s.unit_hidden = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteEntry {
  int form_id = 0;
  std::string form;  // skeleton expression
  int variant_id = 0;
  SignalVariant variant;

  bool operator==(const SuiteEntry&) const = default;
};

inline std::vector<FormExpr> suite_skeletons(const ExperimentSpec& spec) {
  std::vector<FormExpr> out;
  if (!spec.forms.empty()) {
    for (const auto& f : spec.forms) {
      FormExpr e = parse_form(f);
      if (!spec.include_tangent) {
        bool tangent = false;
        e.for_each_form([&](const ElementaryForm& ef) { tangent = tangent || ef.kind == WaveKind::Tangent; });
        if (tangent) throw ConfigError("form '" + f + "' uses tan; enable include_tangent");
      }
      out.push_back(std::move(e));
    }
    return out;
  }
  const Combinator ops[] = {Combinator::Sum, Combinator::Product};
  if (spec.include_tangent) return enumerate_forms(kAllWaveKinds, 2, ops);
  return enumerate_forms(kBoundedWaveKinds, 2, ops);
}

/// n_v seeded variants per skeleton. Variant seeds depend only on the
/// master seed and the (form, variant) position, so the noiseless and noisy
/// suites contain the same signals.
inline std::vector<SuiteEntry> build_suite(const ExperimentSpec& spec) {
  spec.validate();
  const VariantOptions opts = spec.variant_options();
  std::optional<TrendForm::Kind> trend;
  if (spec.scenario == Scenario::Trend) trend = spec.trend_kind;
  std::vector<SuiteEntry> suite;
  const auto skeletons = suite_skeletons(spec);
  for (std::size_t f = 0; f < skeletons.size(); ++f) {
    for (int v = 0; v < spec.variants; ++v) {
      const std::uint64_t seed = derive_seed(spec.seed, {0x5017e, f, static_cast<std::uint64_t>(v)});
      suite.push_back({static_cast<int>(f), to_sexpr(skeletons[f], false), v,
                       generate_variant(skeletons[f], trend, seed, opts)});
    }
  }
  return suite;
}

inline nlohmann::json suite_manifest(const ExperimentSpec& spec, const std::vector<SuiteEntry>& suite) {
  nlohmann::json j;
  j["spec"] = spec_to_json(spec);
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& e : suite)
    vs.push_back({{"form_id", e.form_id}, {"form", e.form}, {"variant_id", e.variant_id},
                  {"variant", variant_to_json(e.variant)}});
  j["variants"] = vs;
  return j;
}

inline std::pair<ExperimentSpec, std::vector<SuiteEntry>> manifest_from_json(const nlohmann::json& j) {
  try {
    ExperimentSpec spec = spec_from_json(j.at("spec"));
    std::vector<SuiteEntry> suite;
    for (const auto& v : j.at("variants"))
      suite.push_back({v.at("form_id").get<int>(), v.at("form").get<std::string>(), v.at("variant_id").get<int>(),
                       variant_from_json(v.at("variant"))});
    return {spec, suite};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trained models

/// A feedforward baseline or the best unit of a population model.
struct TrainedModel {
  std::variant<FeedforwardNet, PopulationUnit> model;

  double operator()(double x) const {
    return std::visit([x](const auto& m) { return m.predict(x); }, model);
  }
};

inline nlohmann::json model_to_json(const TrainedModel& m) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, FeedforwardNet>) return net_to_json(v);
        else return unit_to_json(v);
      },
      m.model);
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  const std::string type = j.value("type", "");
  if (type == "feedforward") return {net_from_json(j)};
  if (type == "population-unit") return {unit_from_json(j)};
  throw ParseError("checkpoint: unknown model type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
  std::string scenario;
  int form_id = 0;
  std::string form;
  int variant_id = 0;
  std::string model;
  std::string optimizer;
  int repeat = 0;
  MetricRow metrics;
  double wall_time = 0.0;

  bool failed() const { return metrics.failed; }
};

/// Roster cell coordinates.
struct RunCell {
  std::size_t entry = 0;
  ModelKind model = ModelKind::Sin;
  OptimizerKind optimizer = OptimizerKind::Adam;
  int repeat = 0;
};

/// Every (variant, model, optimizer, repeat) cell; population models use the
/// Adam unit optimizer only.
inline std::vector<RunCell> roster(const ExperimentSpec& spec, std::size_t entries) {
  std::vector<RunCell> cells;
  for (std::size_t e = 0; e < entries; ++e)
    for (ModelKind m : spec.models) {
      std::vector<OptimizerKind> opts = spec.optimizers;
      if (is_population_model(m)) opts = {OptimizerKind::Adam};
      for (OptimizerKind o : opts)
        for (int r = 0; r < spec.repeats; ++r) cells.push_back({e, m, o, r});
    }
  return cells;
}

struct CellOutcome {
  RunRecord record;
  std::optional<TrainedModel> model;
  std::string evolution_log;  // population models only
};

inline std::uint64_t data_seed(const ExperimentSpec& spec, const SuiteEntry& e, int repeat) {
  return derive_seed(spec.seed, {0xda7a, static_cast<std::uint64_t>(e.form_id),
                                 static_cast<std::uint64_t>(e.variant_id), static_cast<std::uint64_t>(repeat)});
}

inline std::uint64_t model_seed(const ExperimentSpec& spec, const SuiteEntry& e, const RunCell& c) {
  return derive_seed(spec.seed,
                     {0x30de1, static_cast<std::uint64_t>(e.form_id), static_cast<std::uint64_t>(e.variant_id),
                      static_cast<std::uint64_t>(c.model), static_cast<std::uint64_t>(c.optimizer),
                      static_cast<std::uint64_t>(c.repeat)});
}

inline FeedforwardNet baseline_net(ModelKind m, std::size_t width, double tau, std::uint64_t seed) {
  switch (m) {
    case ModelKind::Sin: return make_regressor(Activation::Sin, width, seed);
    case ModelKind::Cos: return make_regressor(Activation::Cos, width, seed);
    case ModelKind::SinPlusCos: return make_regressor(Activation::SinPlusCos, width, seed);
    case ModelKind::XPlusSin: return make_regressor(Activation::XPlusSin, width, seed);
    case ModelKind::XPlusCos: return make_regressor(Activation::XPlusCos, width, seed);
    case ModelKind::Snake: return make_regressor(Activation::Snake, width, seed, 2.0 * std::numbers::pi / tau, false);
    case ModelKind::TSnake: {
      FeedforwardNet net = make_regressor(Activation::Snake, width, seed, std::nullopt, true);
      Rng rng(derive_seed(seed, {0xf4e9}));
      for (double& a : net.layers[0].frequencies) a = uniform(rng, 1.0, 6.0);
      return net;
    }
    default: break;
  }
  throw ConfigError("not a feedforward model: " + std::string(to_string(m)));
}

/// Trains and evaluates one roster cell. Failures of any kind become a
/// flagged record; they never escape.
inline CellOutcome run_cell(const ExperimentSpec& spec, const SuiteEntry& e, const RunCell& c) {
  CellOutcome out;
  RunRecord& r = out.record;
  r.scenario = to_string(spec.scenario);
  r.form_id = e.form_id;
  r.form = e.form;
  r.variant_id = e.variant_id;
  r.model = to_string(c.model);
  r.optimizer = to_string(c.optimizer);
  r.repeat = c.repeat;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Domain d = e.variant.domain(spec.train_periods, spec.eval_periods);
    const double noise = spec.effective_noise();
    const SampleSet data = sample_dataset(e.variant, d, spec.sampling_rate, DomainTag::Training,
                                          spec.per_epoch_noise ? 0.0 : noise, data_seed(spec, e, c.repeat));
    TrainConfig tc = spec.train;
    if (spec.per_epoch_noise) tc.epoch_noise_variance = noise;
    const std::uint64_t seed = model_seed(spec, e, c);
    const std::span<const Sample> pts(data.points);

    if (is_population_model(c.model)) {
      Population pop;
      if (c.model == ModelKind::Bayes) {
        BayesConfig bc = spec.bayes_config(seed);
        bc.train = tc;
        pop = bayes_optimize(pts, bc);
      } else {
        PBTConfig pc = spec.pbt_config(seed);
        pc.train = tc;
        pop = evolve(pts, pc, c.model == ModelKind::NFittest ? SelectionMode::NFittest : SelectionMode::Pareto)
                  .population;
      }
      out.evolution_log = evolution_log_csv(pop);
      const PopulationUnit& best = best_unit(pop);
      if (!std::isfinite(best.loss)) throw NonFiniteLoss("every unit diverged");
      out.model = TrainedModel{best};
    } else {
      FeedforwardNet net = baseline_net(c.model, spec.width, e.variant.master_period, seed);
      tc.seed = derive_seed(seed, {0x7a11});
      train(net, pts, tc, OptimizerSpec::defaults(c.optimizer));
      out.model = TrainedModel{std::move(net)};
    }
    const TrainedModel& m = *out.model;
    r.metrics = evaluate_model(m, e.variant, spec.metric_config(d), spec.sampling_rate);
  } catch (const std::exception&) {
    r.metrics = MetricRow::failure();
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct RunOptions {
  // Called once per finished cell, in roster order, after the barrier.
  std::function<void(const RunCell&, const CellOutcome&)> on_cell;
};

/// Runs the full roster on a bounded worker pool. Records come back in
/// roster order regardless of scheduling.
inline std::vector<RunRecord> run_experiment(const ExperimentSpec& spec, const std::vector<SuiteEntry>& suite,
                                             const RunOptions& options = {}) {
  spec.validate();
  const std::vector<RunCell> cells = roster(spec, suite.size());
  std::vector<CellOutcome> outcomes(cells.size());
  parallel_for(cells.size(), resolve_jobs(spec.jobs),
               [&](std::size_t i) { outcomes[i] = run_cell(spec, suite[cells[i].entry], cells[i]); });
  std::vector<RunRecord> records;
  records.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (options.on_cell) options.on_cell(cells[i], outcomes[i]);
    records.push_back(std::move(outcomes[i].record));
  }
  return records;
}

inline std::vector<RunRecord> run_experiment(const ExperimentSpec& spec) {
  return run_experiment(spec, build_suite(spec));
}

inline std::string cell_name(const RunRecord& r) {
  std::string model = r.model;
  std::ranges::replace(model, '+', 'p');
  return r.scenario + "-f" + std::to_string(r.form_id) + "-v" + std::to_string(r.variant_id) + "-" + model + "-" +
         r.optimizer + "-r" + std::to_string(r.repeat);
}

inline constexpr std::string_view kRecordHeader =
    "scenario,form_id,form,variant,model,optimizer,repeat,mse,da,shda,spda,acda,sh_w,sp_w,ac_w,wall_time,failed";

inline std::string records_to_csv(const std::vector<RunRecord>& records) {
  std::string out(kRecordHeader);
  out += '\n';
  for (const auto& r : records) {
    const MetricRow& m = r.metrics;
    out += r.scenario + ',' + std::to_string(r.form_id) + ',' + r.form + ',' + std::to_string(r.variant_id) + ',' +
           r.model + ',' + r.optimizer + ',' + std::to_string(r.repeat);
    for (double v : {m.mse, m.da, m.shda, m.spda, m.acda, m.sh_w, m.sp_w, m.ac_w, r.wall_time}) {
      out += ',';
      out += text::g17(v);
    }
    out += m.failed ? ",1\n" : ",0\n";
  }
  return out;
}

inline std::vector<RunRecord> records_from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) throw ParseError("records file: bad or missing header");
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 17) throw ParseError("records file: expected 17 columns, got " + std::to_string(f.size()));
    RunRecord r;
    r.scenario = f[0];
    r.form_id = static_cast<int>(text::parse_int(f[1]));
    r.form = f[2];
    r.variant_id = static_cast<int>(text::parse_int(f[3]));
    r.model = f[4];
    r.optimizer = f[5];
    r.repeat = static_cast<int>(text::parse_int(f[6]));
    MetricRow& m = r.metrics;
    double* slots[] = {&m.mse, &m.da, &m.shda, &m.spda, &m.acda, &m.sh_w, &m.sp_w, &m.ac_w, &r.wall_time};
    for (std::size_t i = 0; i < 9; ++i) *slots[i] = text::parse_double(f[7 + i]);
    if (f[16] != "0" && f[16] != "1") throw ParseError("records file: failed flag must be 0 or 1");
    m.failed = f[16] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation and reports

struct SummaryRow {
  std::string model;
  double values[5] = {0, 0, 0, 0, 0};
  int cells = 0;
  int failed = 0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  const SummaryRow& at(std::string_view model) const {
    for (const auto& r : rows)
      if (r.model == model) return r;
    throw Error("no summary row for model '" + std::string(model) + "'");
  }
};

/// Mean per model and metric over every record. Failed cells count with
/// the worst value observed for that metric anywhere in the records.
/// Values are summed in sorted order so the result does not depend on the
/// record order.
inline SummaryTable aggregate(const std::vector<RunRecord>& records) {
  double worst[5];
  for (std::size_t c = 0; c < 5; ++c) {
    worst[c] = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : records)
      if (!r.failed()) {
        const double v = metric_value(r.metrics, c);
        if (std::isfinite(v) && !(worst[c] >= v)) worst[c] = v;
      }
  }
  std::map<std::string, std::vector<const RunRecord*>> by_model;
  for (const auto& r : records) by_model[r.model].push_back(&r);
  SummaryTable t;
  for (const auto& [name, rs] : by_model) {
    SummaryRow row;
    row.model = name;
    row.cells = static_cast<int>(rs.size());
    for (const auto* r : rs) row.failed += r->failed() ? 1 : 0;
    for (std::size_t c = 0; c < 5; ++c) {
      std::vector<double> vals;
      for (const auto* r : rs) vals.push_back(r->failed() ? worst[c] : metric_value(r->metrics, c));
      std::ranges::sort(vals);
      double sum = 0.0;
      for (double v : vals) sum += v;
      row.values[c] = sum / static_cast<double>(vals.size());
    }
    t.rows.push_back(row);
  }
  std::ranges::stable_sort(t.rows, [](const SummaryRow& a, const SummaryRow& b) {
    const auto ra = model_rank(a.model), rb = model_rank(b.model);
    return ra != rb ? ra < rb : a.model < b.model;
  });
  return t;
}

/// best[c][i] is true when row i attains the column minimum (ties jointly).
inline std::vector<std::vector<bool>> best_flags(const SummaryTable& t) {
  std::vector<std::vector<bool>> best(5, std::vector<bool>(t.rows.size(), false));
  for (std::size_t c = 0; c < 5; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& r : t.rows)
      if (r.values[c] < lo) lo = r.values[c];
    for (std::size_t i = 0; i < t.rows.size(); ++i) best[c][i] = t.rows[i].values[c] == lo;
  }
  return best;
}

inline std::string render_markdown(const SummaryTable& t) {
  const auto best = best_flags(t);
  std::string out = "| model |";
  for (auto c : kMetricColumns) out += " " + std::string(c) + " |";
  out += " cells | failed |\n|---|";
  for (std::size_t c = 0; c < 5; ++c) out += "---:|";
  out += "---:|---:|\n";
  char buf[64];
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out += "| " + r.model + " |";
    for (std::size_t c = 0; c < 5; ++c) {
      std::snprintf(buf, sizeof buf, "%.4g", r.values[c]);
      out += best[c][i] ? std::string(" **") + buf + "** |" : std::string(" ") + buf + " |";
    }
    out += " " + std::to_string(r.cells) + " | " + std::to_string(r.failed) + " |\n";
  }
  return out;
}

inline std::string render_csv(const SummaryTable& t) {
  const auto best = best_flags(t);
  std::string out = "model";
  for (auto c : kMetricColumns) out += "," + std::string(c);
  out += ",cells,failed,best\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out += r.model;
    for (double v : r.values) out += "," + text::shortest(v);
    out += "," + std::to_string(r.cells) + "," + std::to_string(r.failed) + ",";
    std::string flags;
    for (std::size_t c = 0; c < 5; ++c)
      if (best[c][i]) flags += (flags.empty() ? "" : ";") + std::string(kMetricColumns[c]);
    out += flags + "\n";
  }
  return out;
}

inline SummaryTable parse_summary_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "model,MSE,DA-,SHDA-,SPDA-,ACDA-,cells,failed,best")
    throw ParseError("summary file: bad header");
  SummaryTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 9) throw ParseError("summary file: expected 9 columns");
    SummaryRow r;
    r.model = f[0];
    for (std::size_t c = 0; c < 5; ++c) r.values[c] = text::parse_double(f[1 + c]);
    r.cells = static_cast<int>(text::parse_int(f[6]));
    r.failed = static_cast<int>(text::parse_int(f[7]));
    t.rows.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Snake frequency drift

struct DriftResult {
  std::vector<double> initial;
  std::vector<double> final;
  double tolerance = 0.05;

  double found_fraction() const {
    if (final.empty()) return 0.0;
    const auto n = std::ranges::count_if(final, [&](double a) { return std::abs(a - 1.0) < tolerance; });
    return static_cast<double>(n) / static_cast<double>(final.size());
  }
};

struct DriftConfig {
  int runs = 100;
  double init_lo = 0.7;
  double init_hi = 1.3;
  int samples = 1000;
  TrainConfig train;
  OptimizerSpec optimizer = OptimizerSpec::defaults(OptimizerKind::Adam);
  std::uint64_t seed = 0;
  int jobs = 0;
};

/// A single trainable snake neuron fit to x + sin^2(x) on [-5 pi, 5 pi],
/// its frequency drawn uniformly from [init_lo, init_hi].
inline DriftResult snake_drift(const DriftConfig& cfg) {
  if (cfg.runs < 1 || cfg.samples < 2) throw ConfigError("snake drift needs >= 1 run and >= 2 samples");
  DriftResult out;
  out.initial.resize(cfg.runs);
  out.final.resize(cfg.runs);
  parallel_for(static_cast<std::size_t>(cfg.runs), resolve_jobs(cfg.jobs), [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0xd41f7, i});
    Rng rng(seed);
    std::vector<Sample> data;
    const double span = 5.0 * std::numbers::pi;
    for (int k = 0; k < cfg.samples; ++k) {
      const double x = uniform(rng, -span, span);
      const double s = std::sin(x);
      data.push_back({x, x + s * s});
    }
    FeedforwardNet net = make_regressor(Activation::Snake, 1, derive_seed(seed, {1}), std::nullopt, true);
    net.layers[0].frequencies[0] = uniform(rng, cfg.init_lo, cfg.init_hi);
    out.initial[i] = net.layers[0].frequencies[0];
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, {2});
    try {
      train(net, data, tc, cfg.optimizer);
    } catch (const NonFiniteLoss&) {
    }
    out.final[i] = net.layers[0].frequencies[0];
  });
  return out;
}

/// Shared-bin histogram of the initial and final frequencies.
inline std::string drift_histogram_csv(const DriftResult& r, int bins = 40) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* v : {&r.initial, &r.final})
    for (double a : *v)
      if (std::isfinite(a)) {
        lo = std::min(lo, a);
        hi = std::max(hi, a);
      }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi <= lo) hi = lo + 1.0;
  const double w = (hi - lo) / bins;
  std::vector<int> ci(bins, 0), cf(bins, 0);
  auto bin = [&](double a) { return std::clamp(static_cast<int>((a - lo) / w), 0, bins - 1); };
  for (double a : r.initial)
    if (std::isfinite(a)) ++ci[bin(a)];
  for (double a : r.final)
    if (std::isfinite(a)) ++cf[bin(a)];
  std::string out = "bin_lo,bin_hi,initial,final\n";
  for (int b = 0; b < bins; ++b)
    out += text::g17(lo + b * w) + ',' + text::g17(b == bins - 1 ? hi : lo + (b + 1) * w) + ',' +
           std::to_string(ci[b]) + ',' + std::to_string(cf[b]) + '\n';
  return out;
}

}  // namespace perigen
