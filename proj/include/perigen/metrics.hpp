#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "perigen/errors.hpp"
#include "perigen/signals.hpp"

namespace perigen {

template <class P>
concept Predictor = std::invocable<const P&, double> && std::convertible_to<std::invoke_result_t<const P&, double>, double>;

enum class PointMetric { MSE, MAE };

inline double point_metric(PointMetric kind, double y, double y_hat) {
  const double e = y - y_hat;
  return kind == PointMetric::MSE ? e * e : std::abs(e);
}

enum class Warp { Shift, Speedup, Acceleration };

inline std::string_view to_string(Warp w) {
  switch (w) {
    case Warp::Shift: return "sh";
    case Warp::Speedup: return "sp";
    case Warp::Acceleration: return "ac";
  }
  return "?";
}

struct MetricConfig {
  PointMetric point = PointMetric::MSE;
  double epsilon = 0.05;
  int grid_samples = 21;
  double alpha = 1.0;
  Domain domain;

  static MetricConfig for_domain(const Domain& d) {
    MetricConfig c;
    c.domain = d;
    return c;
  }

  void validate() const {
    if (grid_samples < 1 || grid_samples % 2 == 0) throw ConfigError("grid_samples must be odd and positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(alpha >= 1.0)) throw ConfigError("alpha must be >= 1");
    domain.validate();
  }

  /// The j-th correction value; index (n-1)/2 is exactly zero.
  double w(int j) const {
    if (grid_samples == 1) return 0.0;
    return epsilon * static_cast<double>(2 * j - (grid_samples - 1)) / static_cast<double>(grid_samples - 1);
  }
};

/// Scales a point metric by (|x - e_T| / d_T)^alpha.
inline double distance_adjust(double m_value, double x, const MetricConfig& cfg) {
  const double r = std::abs(x - cfg.domain.nearest_training_endpoint(x)) / cfg.domain.diameter();
  return m_value * std::pow(r, cfg.alpha);
}

/// Whole periods between x and its nearest training endpoint.
inline double periods_out(double x, const Domain& d) {
  return std::floor(std::abs(x - d.nearest_training_endpoint(x)) / d.period);
}

/// Argument at which the predictor is queried under correction w. Shift
/// and acceleration act away from the training domain on both branches.
inline double warp_argument(Warp kind, double x, double w, const Domain& d) {
  switch (kind) {
    case Warp::Shift: return x + (x < 0.0 ? -1.0 : 1.0) * w * periods_out(x, d);
    case Warp::Speedup: return x * (1.0 + w);
    case Warp::Acceleration: return x * (1.0 + w * periods_out(x, d));
  }
  return x;
}

struct WarpedValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  double argmin_w = 0.0;
};

namespace detail {

template <Predictor P>
double adjusted_mean(const P& predictor, std::span<const double> xs, std::span<const double> ys, Warp kind, double w,
                     const MetricConfig& cfg, bool warped) {
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double q = warped ? warp_argument(kind, xs[i], w, cfg.domain) : xs[i];
    sum += distance_adjust(point_metric(cfg.point, ys[i], predictor(q)), xs[i], cfg);
  }
  return sum / static_cast<double>(xs.size());
}

}  // namespace detail

/// Minimum over the correction grid of the mean distance-adjusted metric.
/// Ties go to the smallest |w|. Non-finite grid values are skipped.
template <Predictor P>
WarpedValue warped_metric(Warp kind, const P& predictor, std::span<const double> xs, std::span<const double> ys,
                          const MetricConfig& cfg) {
  cfg.validate();
  if (xs.size() != ys.size() || xs.empty()) throw DimensionMismatch("metric points and targets must match");
  WarpedValue best;
  const int mid = (cfg.grid_samples - 1) / 2;
  // Visit 0, then +-step, +-2 step, ... so a strict comparison keeps the smallest |w|.
  for (int k = 0; k <= mid; ++k) {
    for (int j : {mid - k, mid + k}) {
      if (k == 0 && j != mid) continue;
      const double w = cfg.w(j);
      const double v = detail::adjusted_mean(predictor, xs, ys, kind, w, cfg, true);
      if (std::isfinite(v) && !(best.value <= v)) {
        best.value = v;
        best.argmin_w = w;
      }
      if (k == 0) break;
    }
  }
  return best;
}

template <Predictor P, Predictor Truth>
WarpedValue warped_metric(Warp kind, const P& predictor, const Truth& truth, std::span<const double> xs,
                          const MetricConfig& cfg) {
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = truth(xs[i]);
  return warped_metric(kind, predictor, xs, ys, cfg);
}

/// One report cell set: the plain metric, its distance-adjusted form and
/// the three warp-corrected forms with their minimizing w.
struct MetricRow {
  double mse = 0.0;
  double da = 0.0;
  double shda = 0.0;
  double spda = 0.0;
  double acda = 0.0;
  double sh_w = 0.0;
  double sp_w = 0.0;
  double ac_w = 0.0;
  bool failed = false;

  static MetricRow failure() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return MetricRow{nan, nan, nan, nan, nan, nan, nan, nan, true};
  }
};

inline constexpr std::string_view kMetricColumns[] = {"MSE", "DA-", "SHDA-", "SPDA-", "ACDA-"};

inline double metric_value(const MetricRow& r, std::size_t column) {
  switch (column) {
    case 0: return r.mse;
    case 1: return r.da;
    case 2: return r.shda;
    case 3: return r.spda;
    case 4: return r.acda;
  }
  throw Error("metric column out of range");
}

inline double& metric_value(MetricRow& r, std::size_t column) {
  switch (column) {
    case 0: return r.mse;
    case 1: return r.da;
    case 2: return r.shda;
    case 3: return r.spda;
    case 4: return r.acda;
  }
  throw Error("metric column out of range");
}

/// Evaluates a predictor against the noiseless truth on the regular
/// evaluation grid. Exceptions and non-finite predictions flag the row as
/// failed instead of propagating.
template <Predictor P, Predictor Truth>
MetricRow evaluate_model(const P& predictor, const Truth& truth, const MetricConfig& cfg, int rate) {
  cfg.validate();
  const std::vector<double> xs = evaluation_grid(cfg.domain, rate);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = truth(xs[i]);
  try {
    MetricRow row;
    double plain = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) plain += point_metric(cfg.point, ys[i], predictor(xs[i]));
    row.mse = plain / static_cast<double>(xs.size());
    row.da = detail::adjusted_mean(predictor, xs, ys, Warp::Shift, 0.0, cfg, false);
    if (!std::isfinite(row.mse) || !std::isfinite(row.da)) return MetricRow::failure();
    const WarpedValue sh = warped_metric(Warp::Shift, predictor, xs, ys, cfg);
    const WarpedValue sp = warped_metric(Warp::Speedup, predictor, xs, ys, cfg);
    const WarpedValue ac = warped_metric(Warp::Acceleration, predictor, xs, ys, cfg);
    row.shda = sh.value;
    row.sh_w = sh.argmin_w;
    row.spda = sp.value;
    row.sp_w = sp.argmin_w;
    row.acda = ac.value;
    row.ac_w = ac.argmin_w;
    return row;
  } catch (const std::exception&) {
    return MetricRow::failure();
  }
}

}  // namespace perigen
