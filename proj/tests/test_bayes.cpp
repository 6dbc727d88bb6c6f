#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "perigen/bayes.hpp"

using namespace perigen;

namespace {

// Dense reference: K + noise I solved with a pivoted LU.
GPPosterior dense_posterior(const GPSurrogate& gp, const std::vector<double>& ps, const std::vector<double>& ls,
                            double p) {
  const Eigen::Index n = static_cast<Eigen::Index>(ps.size());
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd k(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = gp.kernel(ps[i], ps[j]) + (i == j ? gp.noise_variance : 0.0);
    k(i) = gp.kernel(p, ps[i]);
    y(i) = ls[i] - gp.prior_mean;
  }
  const auto lu = K.fullPivLu();
  return {gp.prior_mean + k.dot(lu.solve(y)), gp.signal_variance - k.dot(lu.solve(k))};
}

BayesConfig bowl_config() {
  BayesConfig c;
  c.range_lo = 0.5;
  c.range_hi = 1.0;
  return c;
}

}  // namespace

TEST(GP, InterpolatesObservations) {
  GPSurrogate gp(0.2, 1.0, 1e-10);
  const std::vector<double> ps{0.1, 0.4, 0.9}, ls{1.0, -0.5, 0.3};
  gp.fit(ps, ls);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_NEAR(gp.posterior(ps[i]).mean, ls[i], 1e-7);
    EXPECT_NEAR(gp.posterior(ps[i]).variance, 0.0, 1e-7);
  }
}

TEST(GP, RevertsToPriorFarAway) {
  GPSurrogate gp(0.1, 2.0, 1e-6, 0.7);
  const std::vector<double> ps{0.0, 0.1}, ls{5.0, 4.0};
  gp.fit(ps, ls);
  const GPPosterior far = gp.posterior(50.0);
  EXPECT_NEAR(far.mean, 0.7, 1e-12);
  EXPECT_NEAR(far.variance, 2.0, 1e-12);
}

TEST(GP, MatchesDenseSolve) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial;
    std::vector<double> ps, ls;
    for (int i = 0; i < n; ++i) {
      ps.push_back(uniform(rng, 0.5, 1.0));
      ls.push_back(uniform(rng, 0.0, 2.0));
    }
    GPSurrogate gp(0.125, uniform(rng, 0.1, 1.0), 1e-3, uniform(rng, 0.0, 1.0));
    gp.fit(ps, ls);
    for (double p : {0.5, 0.61, 0.77, 0.93, 1.2}) {
      const GPPosterior a = gp.posterior(p), b = dense_posterior(gp, ps, ls, p);
      EXPECT_NEAR(a.mean, b.mean, 1e-10);
      EXPECT_NEAR(a.variance, std::max(0.0, b.variance), 1e-10);
    }
  }
}

TEST(GP, DuplicateInputsSurviveWithJitter) {
  GPSurrogate gp(0.3, 1.0, 0.0);
  const std::vector<double> ps{0.5, 0.5, 0.8}, ls{1.0, 1.0, 0.2};
  EXPECT_NO_THROW(gp.fit(ps, ls));
  EXPECT_NEAR(gp.posterior(0.5).mean, 1.0, 1e-4);
}

TEST(GP, RejectsBadInput) {
  GPSurrogate gp;
  const std::vector<double> a{0.1, 0.2}, b{1.0};
  EXPECT_THROW(gp.fit(a, b), DimensionMismatch);
  EXPECT_THROW(gp.posterior(0.0), Error);
  GPSurrogate bad(-1.0, 1.0, 0.0);
  EXPECT_THROW(bad.fit(a, a), ConfigError);
}

TEST(EI, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(expected_improvement(0.3, 0.0, 0.5), 0.2);
  EXPECT_EQ(expected_improvement(0.7, 0.0, 0.5), 0.0);
  // At mean == best, EI = sigma * phi(0).
  EXPECT_NEAR(expected_improvement(0.5, 0.04, 0.5), 0.2 / std::sqrt(2 * std::numbers::pi), 1e-15);
  for (double m : {-1.0, 0.0, 0.4, 2.0, 9.0})
    for (double v : {1e-8, 0.01, 1.0}) EXPECT_GE(expected_improvement(m, v, 0.4), 0.0);
  EXPECT_LT(expected_improvement(0.5, 0.01, 0.4), expected_improvement(0.5, 0.09, 0.4));
  EXPECT_GT(expected_improvement(0.3, 0.01, 0.4), expected_improvement(0.35, 0.01, 0.4));
}

TEST(Search, StubBowlConvergesOnEverySeed) {
  for (int s = 0; s < 10; ++s) {
    const double centre = 0.55 + 0.04 * s;
    BayesConfig cfg = bowl_config();
    const BayesTrace t = bayes_search(cfg, [&](std::span<const double> ps, int) {
      std::vector<double> out;
      for (double p : ps) out.push_back((p - centre) * (p - centre));
      return out;
    });
    EXPECT_LT(std::abs(t.best().period - centre), 0.01) << centre;
    EXPECT_LE(std::abs(t.best().period - centre), 5 * cfg.grid_step()) << centre;
  }
}

TEST(Search, TraceInvariants) {
  BayesConfig cfg = bowl_config();
  cfg.max_generations = 6;
  const BayesTrace t = bayes_search(cfg, [](std::span<const double> ps, int) {
    std::vector<double> out;
    for (double p : ps) out.push_back(std::cos(12 * p) + p + 2.0);
    return out;
  });
  ASSERT_EQ(t.best_loss.size(), 7u);
  for (std::size_t g = 1; g < t.best_loss.size(); ++g) EXPECT_LE(t.best_loss[g], t.best_loss[g - 1]);
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    EXPECT_GE(t.samples[i].period, cfg.range_lo);
    EXPECT_LE(t.samples[i].period, cfg.range_hi);
    for (std::size_t j = 0; j < i; ++j) EXPECT_GE(std::abs(t.samples[i].period - t.samples[j].period), cfg.grid_step() * 0.999);
  }
  EXPECT_EQ(t.samples.size(), 8u + 6u * 7u);
}

TEST(Search, ZeroGenerationsEvaluatesDesignOnly) {
  BayesConfig cfg = bowl_config();
  cfg.max_generations = 0;
  int calls = 0;
  const BayesTrace t = bayes_search(cfg, [&](std::span<const double> ps, int g) {
    ++calls;
    EXPECT_EQ(g, 0);
    return std::vector<double>(ps.size(), 1.0);
  });
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(t.samples.size(), 8u);
  EXPECT_EQ(t.samples.front().period, 0.5);
  EXPECT_EQ(t.samples.back().period, 1.0);
}

TEST(Search, NonFiniteLossesAreImputed) {
  BayesConfig cfg = bowl_config();
  cfg.max_generations = 2;
  const BayesTrace t = bayes_search(cfg, [](std::span<const double> ps, int) {
    std::vector<double> out;
    for (double p : ps) out.push_back(p > 0.9 ? std::numeric_limits<double>::infinity() : (p - 0.6) * (p - 0.6));
    return out;
  });
  EXPECT_LT(t.best().loss, 1e-3);
}

TEST(Optimize, TrainsOneUnitPerSample) {
  Rng rng(2);
  std::vector<Sample> data;
  for (int i = 0; i < 200; ++i) {
    const double x = uniform(rng, -3.5, 3.5);
    data.push_back({x, std::sin(2 * std::numbers::pi * x / 0.7)});
  }
  BayesConfig cfg = bowl_config();
  cfg.max_generations = 1;
  cfg.hidden_width = 8;
  cfg.train.max_epochs = 10;
  const Population pop = bayes_optimize(data, cfg);
  EXPECT_EQ(pop.units.size(), 15u);
  for (std::size_t i = 0; i < pop.units.size(); ++i) {
    EXPECT_EQ(pop.units[i].id, static_cast<int>(i));
    EXPECT_TRUE(pop.units[i].trained);
    EXPECT_EQ(pop.units[i].generation, i < 8 ? 0 : 1);
  }
  const Population again = bayes_optimize(data, cfg);
  for (std::size_t i = 0; i < pop.units.size(); ++i) EXPECT_EQ(pop.units[i], again.units[i]);
}
