#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "perigen/metrics.hpp"

using namespace perigen;

namespace {

MetricConfig config(double tau = 0.75) {
  return MetricConfig::for_domain(Domain{5, 10, tau});
}

std::vector<double> grid(const MetricConfig& cfg) { return evaluation_grid(cfg.domain, 100); }

}  // namespace

TEST(PointMetric, SquaredAndAbsolute) {
  EXPECT_EQ(point_metric(PointMetric::MSE, 1.0, -2.0), 9.0);
  EXPECT_EQ(point_metric(PointMetric::MAE, 1.0, -2.0), 3.0);
}

TEST(CorrectionGrid, SymmetricWithExactZero) {
  const MetricConfig cfg = config();
  EXPECT_EQ(cfg.w(10), 0.0);
  EXPECT_DOUBLE_EQ(cfg.w(0), -0.05);
  EXPECT_DOUBLE_EQ(cfg.w(20), 0.05);
  for (int j = 0; j < 21; ++j) {
    EXPECT_EQ(cfg.w(j), -cfg.w(20 - j));
    EXPECT_NEAR(cfg.w(j), -0.05 + 0.005 * j, 1e-15);
  }
}

TEST(DistanceAdjust, ScalesByRelativeDistance) {
  const MetricConfig cfg = config(1.0);
  EXPECT_DOUBLE_EQ(distance_adjust(2.0, 7.5, cfg), 2.0 * 2.5 / 10.0);
  EXPECT_DOUBLE_EQ(distance_adjust(2.0, -7.5, cfg), 2.0 * 2.5 / 10.0);
  MetricConfig sq = cfg;
  sq.alpha = 2.0;
  EXPECT_DOUBLE_EQ(distance_adjust(2.0, 7.5, sq), 2.0 * 0.0625);
}

TEST(PeriodsOut, CountsWholePeriods) {
  const Domain d{5, 10, 0.5};
  EXPECT_EQ(periods_out(2.6, d), 0.0);
  EXPECT_EQ(periods_out(3.1, d), 1.0);
  EXPECT_EQ(periods_out(-4.9, d), 4.0);
}

TEST(Warps, ConstructedPredictorsRecoverTheirCorrection) {
  for (Warp kind : {Warp::Speedup, Warp::Shift, Warp::Acceleration}) {
    const MetricConfig cfg = config();
    const double w_star = cfg.w(14);
    ASSERT_DOUBLE_EQ(w_star, 0.02);
    const oracle::WarpedTruth pred{kind, w_star, cfg.domain, {}};
    const oracle::Harmonic truth;
    const auto xs = grid(cfg);
    const WarpedValue v = warped_metric(kind, pred, truth, xs, cfg);
    EXPECT_EQ(v.argmin_w, w_star) << to_string(kind);
    EXPECT_LT(v.value, 1e-10) << to_string(kind);
    const MetricRow row = evaluate_model(pred, truth, cfg, 100);
    EXPECT_LT(metric_value(row, 2 + static_cast<std::size_t>(kind)), 0.01 * row.da) << to_string(kind);
  }
}

TEST(Warps, NegativeCorrectionIsFoundToo) {
  const MetricConfig cfg = config(0.6);
  const double w_star = cfg.w(7);
  const oracle::WarpedTruth pred{Warp::Speedup, w_star, cfg.domain, {0.6}};
  const WarpedValue v = warped_metric(Warp::Speedup, pred, oracle::Harmonic{0.6}, grid(cfg), cfg);
  EXPECT_EQ(v.argmin_w, w_star);
}

TEST(Warps, CorrectedNeverExceedsDistanceAdjusted) {
  const MetricConfig cfg = config();
  const oracle::Harmonic truth;
  auto pred = [](double x) { return 0.8 * std::sin(8.0 * x) + 0.1 * x; };
  const MetricRow r = evaluate_model(pred, truth, cfg, 100);
  EXPECT_FALSE(r.failed);
  EXPECT_LE(r.shda, r.da);
  EXPECT_LE(r.spda, r.da);
  EXPECT_LE(r.acda, r.da);
}

TEST(Warps, ZeroCorrectionWinsTies) {
  const MetricConfig cfg = config();
  auto zero = [](double) { return 0.0; };
  const oracle::Harmonic truth;
  for (Warp kind : {Warp::Speedup, Warp::Shift, Warp::Acceleration}) {
    const WarpedValue v = warped_metric(kind, zero, truth, grid(cfg), cfg);
    EXPECT_EQ(v.argmin_w, 0.0);
  }
}

TEST(Metrics, ConstantZeroPredictorOracle) {
  // Against sin(2 pi x / tau) the zero predictor has MSE 1/2 on a whole
  // number of periods, and the distance weights average in closed form.
  const double tau = 0.75;
  const MetricConfig cfg = config(tau);
  auto truth = [tau](double x) { return std::sin(2.0 * std::numbers::pi * x / tau); };
  auto zero = [](double) { return 0.0; };
  const MetricRow r = evaluate_model(zero, truth, cfg, 100);
  EXPECT_NEAR(r.mse, 0.5, 1e-12);
  double da = 0.0;
  const auto xs = grid(cfg);
  for (double x : xs) {
    const double y = truth(x);
    da += y * y * (std::abs(x) - 5 * tau) / (10 * tau);
  }
  EXPECT_NEAR(r.da, da / static_cast<double>(xs.size()), 1e-12);
  EXPECT_NEAR(r.da, 0.5 * 0.25, 2e-3);
  EXPECT_DOUBLE_EQ(r.shda, r.da);
  EXPECT_DOUBLE_EQ(r.spda, r.da);
  EXPECT_DOUBLE_EQ(r.acda, r.da);
}

TEST(Metrics, AlphaIsMonotone) {
  auto pred = [](double x) { return std::cos(x); };
  const oracle::Harmonic truth;
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {1.0, 1.5, 2.0, 3.0}) {
    MetricConfig cfg = config();
    cfg.alpha = alpha;
    const double da = evaluate_model(pred, truth, cfg, 100).da;
    EXPECT_LT(da, prev);
    prev = da;
  }
}

TEST(Metrics, MirrorSymmetry) {
  const MetricConfig cfg = config();
  auto truth = [](double x) { return std::sin(3.0 * x) + 0.2 * x; };
  auto pred = [](double x) { return std::sin(3.1 * x); };
  auto truth_m = [&](double x) { return truth(-x); };
  auto pred_m = [&](double x) { return pred(-x); };
  const MetricRow a = evaluate_model(pred, truth, cfg, 100);
  const MetricRow b = evaluate_model(pred_m, truth_m, cfg, 100);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(metric_value(a, c), metric_value(b, c), 1e-12);
}

TEST(Metrics, FailuresAreFlagged) {
  const MetricConfig cfg = config();
  const oracle::Harmonic truth;
  auto nan = [](double) { return std::numeric_limits<double>::quiet_NaN(); };
  auto thrower = [](double x) -> double {
    if (x > 8.0) throw Overflow("boom");
    return 0.0;
  };
  EXPECT_TRUE(evaluate_model(nan, truth, cfg, 100).failed);
  EXPECT_TRUE(evaluate_model(thrower, truth, cfg, 100).failed);
  EXPECT_FALSE(evaluate_model([](double) { return 0.0; }, truth, cfg, 100).failed);
}

TEST(Metrics, ConfigValidation) {
  MetricConfig cfg = config();
  cfg.grid_samples = 20;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config();
  cfg.alpha = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config();
  const std::vector<double> xs{6.0}, ys{1.0, 2.0};
  EXPECT_THROW(warped_metric(Warp::Shift, [](double) { return 0.0; }, xs, ys, cfg), DimensionMismatch);
}
