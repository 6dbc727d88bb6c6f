#pragma once

// Hierarchical periodic benchmark signals: elementary waveforms, their
// sum/product/composition closure, trends, and the train/evaluation domains
// the signals are sampled on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perigen/errors.hpp"
#include "perigen/rng.hpp"

namespace perigen {

enum class WaveKind { Square, Sawtooth, Sinusoid, Tangent, PolyWave };

inline constexpr WaveKind kAllWaveKinds[] = {WaveKind::Square, WaveKind::Sawtooth,
                                             WaveKind::Sinusoid, WaveKind::Tangent,
                                             WaveKind::PolyWave};
inline constexpr WaveKind kBoundedWaveKinds[] = {WaveKind::Square, WaveKind::Sawtooth,
                                                 WaveKind::Sinusoid, WaveKind::PolyWave};

inline std::string_view to_string(WaveKind k) {
  switch (k) {
    case WaveKind::Square: return "square";
    case WaveKind::Sawtooth: return "saw";
    case WaveKind::Sinusoid: return "sin";
    case WaveKind::Tangent: return "tan";
    case WaveKind::PolyWave: return "poly";
  }
  return "?";
}

inline std::optional<WaveKind> wave_kind_from_string(std::string_view s) {
  for (WaveKind k : kAllWaveKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// One elementary waveform evaluated at the argument x/T + phase. Every
/// shape has unit period in that argument, so the form has period T in x.
struct ElementaryForm {
  WaveKind kind = WaveKind::Sinusoid;
  double period = 1.0;
  double phase = 0.0;
  double amplitude = 1.0;
  int poly_order = 1;  // PolyWave only
  double clamp = std::numeric_limits<double>::infinity();  // Tangent only

  bool operator==(const ElementaryForm&) const = default;
};

inline void validate(const ElementaryForm& f) {
  if (!(f.period > 0.0)) throw ConfigError("elementary form period must be positive");
  if (f.kind == WaveKind::PolyWave && f.poly_order < 1)
    throw ConfigError("polynomial wave order must be >= 1");
}

namespace wave {

inline double frac(double t) { return t - std::floor(t); }

// +1 on the first half of each unit period, -1 on the second.
inline double square(double t) { return frac(t) < 0.5 ? 1.0 : -1.0; }

// Positive ramp 0 -> 1 over each unit period.
inline double saw(double t) { return frac(t); }

// Symmetric bilateral polynomial wave in a pi-periodic argument u:
// 2 |2 frac(u/pi) - 1|^n - 1, ranging over [-1, 1] with +1 at period starts.
inline double poly(double u, int n) {
  const double s = std::abs(2.0 * frac(u / std::numbers::pi) - 1.0);
  return 2.0 * std::pow(s, n) - 1.0;
}

}  // namespace wave

inline double eval_elementary(const ElementaryForm& f, double x) {
  constexpr double pi = std::numbers::pi;
  const double t = x / f.period + f.phase;
  double v = 0.0;
  switch (f.kind) {
    case WaveKind::Square: v = wave::square(t); break;
    case WaveKind::Sawtooth: v = wave::saw(t); break;
    case WaveKind::Sinusoid: v = std::sin(2.0 * pi * wave::frac(t)); break;
    case WaveKind::Tangent: {
      const double arg = pi * wave::frac(t);
      const double c = std::cos(arg);
      if (std::abs(c) < 1e-12) throw TangentPole("tangent evaluated at a pole");
      v = std::sin(arg) / c;
      break;
    }
    case WaveKind::PolyWave: v = wave::poly(pi * t, f.poly_order); break;
  }
  v *= f.amplitude;
  return std::clamp(v, -f.clamp, f.clamp);
}

enum class Combinator { Sum, Product, Compose };

inline std::string_view to_string(Combinator c) {
  switch (c) {
    case Combinator::Sum: return "add";
    case Combinator::Product: return "mul";
    case Combinator::Compose: return "compose";
  }
  return "?";
}

struct FormStep {
  Combinator op = Combinator::Sum;
  ElementaryForm form;

  bool operator==(const FormStep&) const = default;
};

/// A periodic form: an elementary base followed by a chain of steps, each
/// combining everything so far (g) with one more elementary form (f) as
/// g + f, g * f, or f(g). The order of the form is the number of steps.
struct FormExpr {
  ElementaryForm base;
  std::vector<FormStep> steps;

  std::size_t order() const { return steps.size(); }

  bool sum_product_only() const {
    return std::ranges::none_of(steps, [](const FormStep& s) { return s.op == Combinator::Compose; });
  }

  template <class Fn>
  void for_each_form(Fn&& fn) const {
    fn(base);
    for (const auto& s : steps) fn(s.form);
  }

  template <class Fn>
  void for_each_form(Fn&& fn) {
    fn(base);
    for (auto& s : steps) fn(s.form);
  }

  bool operator==(const FormExpr&) const = default;
};

inline FormExpr leaf(ElementaryForm f) { return FormExpr{f, {}}; }

inline FormExpr combine(FormExpr g, Combinator op, ElementaryForm f) {
  g.steps.push_back({op, f});
  return g;
}

inline double eval_form(const FormExpr& e, double x) {
  double v = eval_elementary(e.base, x);
  for (const auto& s : e.steps) {
    switch (s.op) {
      case Combinator::Sum: v += eval_elementary(s.form, x); break;
      case Combinator::Product: v *= eval_elementary(s.form, x); break;
      case Combinator::Compose: v = eval_elementary(s.form, v); break;
    }
  }
  return v;
}

/// All skeletons (kinds only, default coefficients) of order <= max_order
/// built from `kinds` with the given combinators, in generation order.
inline std::vector<FormExpr> enumerate_forms(std::span<const WaveKind> kinds, int max_order,
                                             std::span<const Combinator> ops) {
  std::vector<FormExpr> all;
  std::vector<FormExpr> frontier;
  for (WaveKind k : kinds) frontier.push_back(leaf(ElementaryForm{.kind = k}));
  all = frontier;
  for (int order = 1; order <= max_order; ++order) {
    std::vector<FormExpr> next;
    for (const auto& g : frontier)
      for (Combinator op : ops)
        for (WaveKind k : kinds) next.push_back(combine(g, op, ElementaryForm{.kind = k}));
    all.insert(all.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return all;
}

struct TrendForm {
  enum class Kind { Polynomial, Exponential };
  Kind kind = Kind::Polynomial;
  // Polynomial: c_0..c_n. Exponential: {c_0, c_1} for c_0 exp(c_1 x).
  std::vector<double> coefficients{0.0};

  bool operator==(const TrendForm&) const = default;
};

inline std::string_view to_string(TrendForm::Kind k) {
  return k == TrendForm::Kind::Polynomial ? "polynomial" : "exponential";
}

inline double eval_trend(const TrendForm& t, double x) {
  double r = 0.0;
  if (t.kind == TrendForm::Kind::Polynomial) {
    if (t.coefficients.empty()) throw ConfigError("polynomial trend needs at least one coefficient");
    for (auto it = t.coefficients.rbegin(); it != t.coefficients.rend(); ++it) r = r * x + *it;
  } else {
    if (t.coefficients.size() != 2) throw ConfigError("exponential trend needs exactly c0 and c1");
    r = t.coefficients[0] * std::exp(t.coefficients[1] * x);
  }
  if (!std::isfinite(r)) throw Overflow("trend value not representable");
  return r;
}

/// Training domain (-n_T tau, n_T tau) and evaluation domain
/// (-n_E tau, n_E tau) minus the training domain.
struct Domain {
  int train_periods = 5;
  int eval_periods = 10;
  double period = 1.0;

  double train_edge() const { return train_periods * period; }
  double eval_edge() const { return eval_periods * period; }
  double diameter() const { return 2.0 * train_edge(); }
  double nearest_training_endpoint(double x) const { return x < 0.0 ? -train_edge() : train_edge(); }
  bool in_training(double x) const { return std::abs(x) < train_edge(); }
  bool in_evaluation(double x) const {
    const double a = std::abs(x);
    return a >= train_edge() && a < eval_edge();
  }

  void validate() const {
    if (train_periods < 1) throw ConfigError("n_T must be >= 1");
    if (eval_periods <= train_periods) throw ConfigError("n_E must exceed n_T");
    if (!(period > 0.0)) throw ConfigError("period must be positive");
  }
};

enum class DomainTag { Training, Evaluation };

inline std::string_view to_string(DomainTag t) {
  return t == DomainTag::Training ? "train" : "eval";
}

/// Regular midpoint grid over the evaluation domain with `rate` points per
/// period: the left branch ascending, then the right branch ascending. The
/// two branches are exact mirror images.
inline std::vector<double> evaluation_grid(const Domain& d, int rate) {
  const double h = d.period / rate;
  const std::size_t per_side = static_cast<std::size_t>(rate) * (d.eval_periods - d.train_periods);
  std::vector<double> xs(2 * per_side);
  for (std::size_t i = 0; i < per_side; ++i) {
    const double r = d.train_edge() + (static_cast<double>(i) + 0.5) * h;
    xs[per_side - 1 - i] = -r;
    xs[per_side + i] = r;
  }
  return xs;
}

/// Regular midpoint grid over the training domain at the same density.
inline std::vector<double> training_grid(const Domain& d, int rate) {
  const double h = d.period / rate;
  const std::size_t n = static_cast<std::size_t>(rate) * 2 * d.train_periods;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = -d.train_edge() + (static_cast<double>(i) + 0.5) * h;
  return xs;
}

struct SignalVariant {
  FormExpr periodic;
  std::optional<TrendForm> trend;
  double master_period = 1.0;
  double normalization = 1.0;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;

  /// Normalized periodic component; period master_period.
  double periodic_value(double x) const { return eval_form(periodic, x) / normalization; }

  /// Normalized noiseless signal.
  double value(double x) const {
    double v = eval_form(periodic, x);
    if (trend) v += eval_trend(*trend, x);
    return v / normalization;
  }

  double operator()(double x) const { return value(x); }

  Domain domain(int n_T, int n_E) const { return Domain{n_T, n_E, master_period}; }

  bool operator==(const SignalVariant&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct VariantOptions {
  Interval amplitude{0.2, 1.0};
  Interval phase{0.0, 1.0};
  Interval master_period{0.5, 1.0};
  int max_harmonic = 3;    // component periods are tau / k, k in 1..max_harmonic
  int max_poly_order = 3;  // polynomial wave order drawn from 1..max_poly_order
  double tangent_clamp = 10.0;
  int retry_budget = 32;
  int trend_order = 1;
  double noise_variance = 0.0;
  // Domain used for normalization.
  int train_periods = 5;
  int eval_periods = 10;
  int sampling_rate = 100;
};

/// Dense grid (10x the sampling rate) over the evaluation domain merged with
/// the regular evaluation grid; normalization takes the max over both.
inline std::vector<double> normalization_grid(const Domain& d, int rate) {
  auto xs = evaluation_grid(d, 10 * rate);
  auto coarse = evaluation_grid(d, rate);
  xs.insert(xs.end(), coarse.begin(), coarse.end());
  return xs;
}

namespace detail {

inline void draw_coefficients(FormExpr& e, double tau, Rng& rng, const VariantOptions& o) {
  bool first = true;
  e.for_each_form([&](ElementaryForm& f) {
    // The base keeps k = 1 so tau is the fundamental period.
    const int k = first ? 1 : uniform_int(rng, 1, o.max_harmonic);
    first = false;
    f.period = tau / k;
    f.phase = uniform(rng, o.phase.lo, o.phase.hi);
    f.amplitude = uniform(rng, o.amplitude.lo, o.amplitude.hi);
    f.poly_order = f.kind == WaveKind::PolyWave ? uniform_int(rng, 1, o.max_poly_order) : 1;
    f.clamp = f.kind == WaveKind::Tangent ? o.tangent_clamp : std::numeric_limits<double>::infinity();
  });
}

inline TrendForm draw_trend(TrendForm::Kind kind, double tau, Rng& rng, const VariantOptions& o) {
  // Coefficients are scaled so each term reaches an amplitude-range
  // magnitude at the outer edge of the evaluation domain.
  const double reach = o.eval_periods * tau;
  auto signed_amp = [&] {
    const double a = uniform(rng, o.amplitude.lo, o.amplitude.hi);
    return uniform(rng, 0.0, 1.0) < 0.5 ? -a : a;
  };
  TrendForm t;
  t.kind = kind;
  t.coefficients.clear();
  if (kind == TrendForm::Kind::Polynomial) {
    for (int k = 0; k <= o.trend_order; ++k) t.coefficients.push_back(signed_amp() / std::pow(reach, k));
  } else {
    t.coefficients = {signed_amp(), signed_amp() / reach};
  }
  return t;
}

}  // namespace detail

/// Draws a concrete variant of a skeleton. Same seed, same options, same
/// skeleton: bit-identical variant.
inline SignalVariant generate_variant(const FormExpr& skeleton,
                                      std::optional<TrendForm::Kind> trend_kind,
                                      std::uint64_t seed, const VariantOptions& opts = {}) {
  Rng rng(seed);
  for (int attempt = 0; attempt < opts.retry_budget; ++attempt) {
    SignalVariant v;
    v.periodic = skeleton;
    v.seed = seed;
    v.noise_variance = opts.noise_variance;
    v.master_period = uniform(rng, opts.master_period.lo, opts.master_period.hi);
    detail::draw_coefficients(v.periodic, v.master_period, rng, opts);
    if (trend_kind) v.trend = detail::draw_trend(*trend_kind, v.master_period, rng, opts);

    const Domain d{opts.train_periods, opts.eval_periods, v.master_period};
    double peak = 0.0;
    try {
      for (double x : normalization_grid(d, opts.sampling_rate)) {
        double y = eval_form(v.periodic, x);
        if (v.trend) y += eval_trend(*v.trend, x);
        peak = std::max(peak, std::abs(y));
      }
    } catch (const TangentPole&) {
      continue;
    } catch (const Overflow&) {
      continue;
    }
    if (!std::isfinite(peak) || peak <= 0.0) continue;
    v.normalization = peak;
    return v;
  }
  throw UnboundedVariant("no bounded variant found within the retry budget");
}

struct Sample {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Sample&) const = default;
};

struct SampleSet {
  std::vector<Sample> points;
  DomainTag tag = DomainTag::Training;

  std::size_t size() const { return points.size(); }
  bool operator==(const SampleSet&) const = default;
};

/// Training sets: rate * 2 n_T points uniform over the training domain, with
/// N(0, noise_variance) added to y. Evaluation sets: the noiseless regular
/// evaluation grid.
inline SampleSet sample_dataset(const SignalVariant& v, const Domain& d, int rate, DomainTag which,
                                double noise_variance, std::uint64_t seed) {
  if (rate < 1) throw ConfigError("sampling rate must be >= 1");
  d.validate();
  SampleSet out;
  out.tag = which;
  if (which == DomainTag::Evaluation) {
    for (double x : evaluation_grid(d, rate)) out.points.push_back({x, v.value(x)});
    return out;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(-d.train_edge(), d.train_edge());
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = std::sqrt(std::max(0.0, noise_variance));
  const std::size_t n = static_cast<std::size_t>(rate) * 2 * d.train_periods;
  out.points.reserve(n);
  while (out.points.size() < n) {
    const double x = ux(rng);
    if (!d.in_training(x)) continue;
    double y = v.value(x);
    if (sigma > 0.0) y += sigma * noise(rng);
    out.points.push_back({x, y});
  }
  return out;
}

}  // namespace perigen
