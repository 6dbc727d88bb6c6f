// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>

#include "oracles.hpp"
#include "perigen/perigen.hpp"

namespace fs = std::filesystem;
using namespace perigen;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void criterion(int n, const char* name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0 || secs < budget_s;
  const bool pass = v.pass && in_time;
  failures += pass ? 0 : 1;
  std::printf("criterion %d: %s %s (%s; %.1f s%s)\n", n, pass ? "PASS" : "FAIL", name, v.detail.c_str(), secs,
              in_time ? "" : ", over budget");
  std::fflush(stdout);
}

ExperimentSpec reduced_suite(Scenario scenario, std::vector<ModelKind> models) {
  ExperimentSpec s;
  s.scenario = scenario;
  s.forms = {"sin", "square", "(mul sin square)"};
  s.variants = 3;
  s.repeats = 2;
  s.models = std::move(models);
  s.optimizers = {OptimizerKind::Adam};
  s.seed = 2024;
  return s;
}

double mean_mse(const SummaryTable& t, ModelKind m) { return t.at(to_string(m)).values[0]; }

int run_cli(const std::string& args) {
  const int status = std::system((std::string(PERIGEN_CLI) + " " + args + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  criterion(1, "gradients match central differences for 8 activations x 10 nets", 10, [] {
    double worst = 0.0;
    for (Activation kind : kAllActivations)
      for (std::uint64_t seed = 0; seed < 10; ++seed)
        worst = std::max(worst, oracle::max_gradient_error(oracle::random_net(kind, seed)));
    return Verdict{worst < 1e-4, "max relative error " + fmt("%.3g", worst)};
  });

  criterion(2, "warp-corrected metrics recover constructed corrections", 5, [] {
    bool ok = true;
    std::string detail;
    for (Warp kind : {Warp::Speedup, Warp::Shift, Warp::Acceleration}) {
      const MetricConfig cfg = MetricConfig::for_domain(Domain{5, 10, 0.75});
      const oracle::WarpedTruth pred{kind, 0.02, cfg.domain, {}};
      const MetricRow row = evaluate_model(pred, oracle::Harmonic{}, cfg, 100);
      const double corrected = metric_value(row, 2 + static_cast<std::size_t>(kind));
      const double w = kind == Warp::Shift ? row.sh_w : kind == Warp::Speedup ? row.sp_w : row.ac_w;
      const bool good = w == cfg.w(14) && std::abs(w - 0.02) < 1e-15 && corrected < 0.01 * row.da;
      ok = ok && good;
      detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(kind)) + " w=" + fmt("%.4g", w) +
                " ratio " + fmt("%.2g", corrected / row.da);
    }
    return Verdict{ok, detail};
  });

  SummaryTable noiseless;
  criterion(3, "population training beats snake networks on the reduced noiseless suite", 1800, [&] {
    const ExperimentSpec s = reduced_suite(
        Scenario::Noiseless, {ModelKind::Snake, ModelKind::TSnake, ModelKind::NFittest, ModelKind::Pareto});
    noiseless = aggregate(run_experiment(s));
    const double snake = mean_mse(noiseless, ModelKind::Snake), tsnake = mean_mse(noiseless, ModelKind::TSnake);
    const double nf = mean_mse(noiseless, ModelKind::NFittest), pa = mean_mse(noiseless, ModelKind::Pareto);
    const double ref = std::min(snake, tsnake);
    return Verdict{nf <= 0.5 * ref && pa <= 0.5 * ref,
                   "nfittest " + fmt("%.4g", nf) + ", pareto " + fmt("%.4g", pa) + ", snake " + fmt("%.4g", snake) +
                       ", t-snake " + fmt("%.4g", tsnake)};
  });

  criterion(4, "population training is robust to noise (sigma^2 = 0.15)", 1800, [&] {
    const ExperimentSpec s = reduced_suite(Scenario::Noisy, {ModelKind::NFittest, ModelKind::Pareto});
    const SummaryTable noisy = aggregate(run_experiment(s));
    bool ok = true;
    std::string detail;
    for (ModelKind m : {ModelKind::NFittest, ModelKind::Pareto}) {
      const double clean = mean_mse(noiseless, m), dirty = mean_mse(noisy, m);
      ok = ok && dirty < 1.25 * clean;
      detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(m)) + " " + fmt("%.4g", clean) +
                " -> " + fmt("%.4g", dirty);
    }
    return Verdict{ok, detail};
  });

  criterion(5, "population training beats every feedforward model on trend signals by 5x", 0, [] {
    const std::vector<ModelKind> ff{ModelKind::Sin,      ModelKind::Cos,   ModelKind::SinPlusCos, ModelKind::XPlusSin,
                                    ModelKind::XPlusCos, ModelKind::Snake, ModelKind::TSnake};
    std::vector<ModelKind> models = ff;
    models.push_back(ModelKind::NFittest);
    models.push_back(ModelKind::Pareto);
    const SummaryTable t = aggregate(run_experiment(reduced_suite(Scenario::Trend, models)));
    const double pbt = std::max(mean_mse(t, ModelKind::NFittest), mean_mse(t, ModelKind::Pareto));
    double best_ff = std::numeric_limits<double>::infinity();
    for (ModelKind m : ff) best_ff = std::min(best_ff, mean_mse(t, m));
    return Verdict{best_ff >= 5.0 * pbt,
                   "worst population mode " + fmt("%.4g", pbt) + ", best feedforward " + fmt("%.4g", best_ff) +
                       ", factor " + fmt("%.3g", best_ff / pbt)};
  });

  criterion(6, "a minority of single snake neurons find the true frequency", 600, [] {
    DriftConfig cfg;
    cfg.runs = 100;
    cfg.seed = 1;
    const double f = snake_drift(cfg).found_fraction();
    return Verdict{f < 0.5, "found fraction " + fmt("%.2f", f)};
  });

  criterion(7, "best unit recovers the period of a pure sinusoid", 900, [] {
    const double tau = 0.75;
    SignalVariant v;
    v.periodic = leaf(ElementaryForm{.kind = WaveKind::Sinusoid, .period = tau});
    v.master_period = tau;
    const Domain d = v.domain(5, 10);
    std::string detail;
    bool ok = true;
    for (SelectionMode mode : {SelectionMode::NFittest, SelectionMode::Pareto}) {
      int hits = 0;
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SampleSet data = sample_dataset(v, d, 100, DomainTag::Training, 0.0, derive_seed(seed, {1}));
        PBTConfig cfg;
        cfg.seed = derive_seed(seed, {2});
        cfg.jobs = 0;
        const double p = best_unit(evolve(data.points, cfg, mode).population).period;
        hits += std::abs(p - tau) < 0.05;
      }
      ok = ok && hits >= 8;
      detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(mode)) + " " + std::to_string(hits) +
                "/10";
    }
    return Verdict{ok, detail};
  });

  criterion(8, "Pareto selection frequencies match normalized scores", 5, [] {
    const auto check = oracle::pareto_frequencies(30000, 7);
    return Verdict{check.worst_z <= 3.0, "largest deviation " + fmt("%.2f", check.worst_z) + " standard errors"};
  });

  criterion(9, "GP posterior is exact and the stub bowl is found", 30, [] {
    double worst = 0.0;
    Rng rng(11);
    for (int n = 1; n <= 20; ++n) {
      std::vector<double> ps, ls;
      for (int i = 0; i < n; ++i) {
        ps.push_back(uniform(rng, 0.5, 1.0));
        ls.push_back(uniform(rng, 0.0, 1.0));
      }
      GPSurrogate gp(0.125, 0.3, 1e-3, 0.5);
      gp.fit(ps, ls);
      Eigen::MatrixXd K(n, n);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) K(i, j) = gp.kernel(ps[i], ps[j]) + (i == j ? gp.noise_variance : 0.0);
        y(i) = ls[i] - gp.prior_mean;
      }
      const auto lu = K.fullPivLu();
      for (int q = 0; q < 25; ++q) {
        const double p = 0.45 + 0.025 * q;
        Eigen::VectorXd k(n);
        for (int i = 0; i < n; ++i) k(i) = gp.kernel(p, ps[i]);
        const GPPosterior post = gp.posterior(p);
        worst = std::max(worst, std::abs(post.mean - (gp.prior_mean + k.dot(lu.solve(y)))));
        worst = std::max(worst, std::abs(post.variance - std::max(0.0, gp.signal_variance - k.dot(lu.solve(k)))));
      }
    }
    BayesConfig cfg;
    const double centre = 0.8137;
    const BayesTrace t = bayes_search(cfg, [&](std::span<const double> ps, int) {
      std::vector<double> out;
      for (double p : ps) out.push_back((p - centre) * (p - centre));
      return out;
    });
    const double err = std::abs(t.best().period - centre);
    return Verdict{worst <= 1e-10 && err < 0.01,
                   "max posterior gap " + fmt("%.2g", worst) + ", bowl error " + fmt("%.2g", err)};
  });

  criterion(10, "gen, run and report are byte-identical across two runs", 0, [] {
    const fs::path dir = fs::temp_directory_path() / "perigen-acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    text::write_file((dir / "config.json").string(), R"json({
  "forms": ["sin", "(mul sin square)", "(add saw poly)"],
  "num_variants": 1,
  "num_repeats": 1,
  "optimizers": ["adam", "sgd"],
  "max_epochs": 30,
  "generations": 2,
  "width": 16,
  "unit_hidden": 16
})json");
    std::string tables[2];
    for (int k = 0; k < 2; ++k) {
      const std::string base = (dir / ("r" + std::to_string(k))).string();
      const std::string jobs = k == 0 ? "1" : "4";
      if (run_cli("gen --config " + (dir / "config.json").string() + " --seed 77 --out " + base + ".json") != 0 ||
          run_cli("run --manifest " + base + ".json --jobs " + jobs + " --out " + base + ".csv") != 0 ||
          run_cli("report " + base + ".csv --out " + base) != 0)
        return Verdict{false, "pipeline command failed"};
      tables[k] = text::read_file(base + ".md") + text::read_file(base + ".csv");
    }
    fs::remove_all(dir);
    return Verdict{tables[0] == tables[1] && !tables[0].empty(),
                   std::to_string(tables[0].size()) + " bytes of tables compared"};
  });

  return failures == 0 ? 0 : 1;
}
