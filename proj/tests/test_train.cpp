#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "perigen/form_io.hpp"
#include "perigen/nets.hpp"
#include "perigen/parallel.hpp"
#include "perigen/train.hpp"

using namespace perigen;

namespace {

// A parameterless model with a fixed output: its validation loss never
// improves after the first epoch.
struct ConstantModel {
  using Workspace = int;
  double c = 0.5;
  double predict(double, int&) const { return c; }
  void backprop(int&, double, std::span<double>) const {}
  std::size_t parameter_count() const { return 0; }
  void read_parameters(std::span<double>) const {}
  void write_parameters(std::span<const double>) {}
};

std::vector<Sample> sampled(double (*f)(double), double lo, double hi, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    const double x = uniform(rng, lo, hi);
    out.push_back({x, f(x)});
  }
  return out;
}

double zero(double) { return 0.0; }

double mean_frequency(const FeedforwardNet& net) {
  const auto& a = net.layers[0].frequencies;
  double s = 0.0;
  for (double v : a) s += v;
  return s / static_cast<double>(a.size());
}

double median(std::vector<double> v) {
  std::ranges::sort(v);
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(EarlyStopping, StopsAfterPatienceStaleEpochs) {
  EarlyStopping s(3);
  EXPECT_FALSE(s.update(1.0));
  EXPECT_FALSE(s.update(0.5));
  EXPECT_FALSE(s.update(0.5));
  EXPECT_FALSE(s.update(0.7));
  EXPECT_TRUE(s.update(0.6));
  EXPECT_EQ(s.best_epoch(), 2);
  EXPECT_EQ(s.best(), 0.5);
}

TEST(Train, PatienceIsExact) {
  ConstantModel m;
  const auto data = sampled(zero, -1, 1, 50, 1);
  TrainConfig cfg;
  cfg.patience = 3;
  const TrainResult r = train(m, data, cfg, OptimizerSpec::defaults(OptimizerKind::Adam));
  EXPECT_EQ(r.best_epoch, 1);
  EXPECT_EQ(r.epochs_run, 4);
  EXPECT_DOUBLE_EQ(r.validation_loss, 0.25);
}

TEST(Train, ConstantTargetLinearNet) {
  DenseLayer l = glorot_init(1, 1, 5);
  l.biases[0] = 0.8;
  FeedforwardNet net({l});
  const auto data = sampled(zero, -2, 2, 200, 2);
  TrainConfig cfg;
  cfg.max_epochs = 2000;
  cfg.patience = 50;
  const TrainResult r = train(net, data, cfg, OptimizerSpec::defaults(OptimizerKind::Adam));
  EXPECT_LT(r.validation_loss, 1e-6);
}

TEST(Train, FrozenSnakeFitsSinusoidOnTrainingDomain) {
  const double tau = 0.75;
  const double a = 2.0 * std::numbers::pi / tau;
  Rng rng(9);
  std::vector<Sample> data;
  for (int i = 0; i < 1000; ++i) {
    const double x = uniform(rng, -5 * tau, 5 * tau);
    data.push_back({x, std::sin(a * x)});
  }
  FeedforwardNet net = make_regressor(Activation::Snake, 64, 4, a, false);
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.patience = 50;
  cfg.max_epochs = 2000;
  OptimizerSpec opt = OptimizerSpec::defaults(OptimizerKind::Adam);
  opt.learning_rate = 1e-2;
  train(net, data, cfg, opt);
  EXPECT_LT(mean_squared_error(net, std::span<const Sample>(data)), 0.01);
  for (double f : net.layers[0].frequencies) EXPECT_EQ(f, a);
}

TEST(Train, DeterministicUnderSeed) {
  const auto data = sampled([](double x) { return std::sin(3 * x); }, -2, 2, 300, 3);
  TrainConfig cfg;
  cfg.seed = 17;
  cfg.max_epochs = 40;
  FeedforwardNet a = make_regressor(Activation::Sin, 16, 1), b = a;
  const auto ra = train(a, data, cfg, OptimizerSpec::defaults(OptimizerKind::Nadam));
  const auto rb = train(b, data, cfg, OptimizerSpec::defaults(OptimizerKind::Nadam));
  EXPECT_EQ(a, b);
  EXPECT_EQ(ra.validation_history, rb.validation_history);
}

TEST(Train, ReturnsBestEpochParameters) {
  const auto data = sampled([](double x) { return std::cos(2 * x) + 0.3 * x; }, -3, 3, 300, 4);
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.max_epochs = 60;
  cfg.patience = 5;
  FeedforwardNet net = make_regressor(Activation::XPlusSin, 16, 8);
  OptimizerSpec opt = OptimizerSpec::defaults(OptimizerKind::SGD);
  opt.learning_rate = 0.05;
  const TrainResult r = train(net, data, cfg, opt);
  ASSERT_EQ(static_cast<int>(r.validation_history.size()), r.epochs_run);
  for (double l : r.validation_history) EXPECT_LE(r.validation_loss, l);
  EXPECT_EQ(r.validation_history[r.best_epoch - 1], r.validation_loss);
}

TEST(Train, DivergenceRaisesNonFiniteLoss) {
  const auto data = sampled([](double x) { return 1e3 * x; }, -50, 50, 100, 5);
  FeedforwardNet net = make_regressor(Activation::XPlusCos, 8, 0);
  OptimizerSpec opt = OptimizerSpec::defaults(OptimizerKind::SGD);
  opt.learning_rate = 10.0;
  EXPECT_THROW(train(net, data, TrainConfig{}, opt), NonFiniteLoss);
}

TEST(Train, RejectsBadConfig) {
  FeedforwardNet net = make_regressor(Activation::Sin, 2, 0);
  const auto data = sampled(zero, -1, 1, 10, 0);
  TrainConfig cfg;
  cfg.validation_fraction = 1.0;
  EXPECT_THROW(train(net, data, cfg, OptimizerSpec{}), ConfigError);
  EXPECT_THROW(train(net, std::span<const Sample>(data).first(1), TrainConfig{}, OptimizerSpec{}), ConfigError);
}

// Two-layer 128-wide snake nets with trainable frequencies drawn from
// U[1, 6], fit to periodic signals: the median of the mean frequency does
// not decrease under training.
TEST(Train, TrainableSnakeFrequenciesDriftUpward) {
  const int runs = 40;
  const char* forms[] = {"sin", "(add sin square)", "(mul saw sin)", "square"};
  std::vector<double> before(runs), after(runs);
  parallel_for(runs, resolve_jobs(0), [&](std::size_t i) {
    VariantOptions vo;
    const SignalVariant v = generate_variant(parse_form(forms[i % 4]), std::nullopt, derive_seed(21, {i}), vo);
    const Domain d = v.domain(5, 10);
    const SampleSet s = sample_dataset(v, d, 100, DomainTag::Training, 0.0, derive_seed(22, {i}));
    FeedforwardNet net = make_regressor(Activation::Snake, 128, derive_seed(23, {i}), std::nullopt, true);
    Rng rng(derive_seed(24, {i}));
    for (double& a : net.layers[0].frequencies) a = uniform(rng, 1.0, 6.0);
    before[i] = mean_frequency(net);
    TrainConfig cfg;
    cfg.seed = derive_seed(25, {i});
    try {
      train(net, s.points, cfg, OptimizerSpec::defaults(OptimizerKind::Adam));
    } catch (const NonFiniteLoss&) {
    }
    after[i] = mean_frequency(net);
  });
  EXPECT_GE(median(after), median(before));
}
