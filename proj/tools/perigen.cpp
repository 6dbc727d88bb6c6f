#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "perigen/perigen.hpp"

namespace fs = std::filesystem;
using namespace perigen;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scenario;
  std::string out;
  int jobs = 0;
  bool include_tangent = false;
  bool per_epoch_noise = false;
};

ExperimentSpec load_spec(const CommonFlags& f) {
  ExperimentSpec spec;
  if (!f.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text::read_file(f.config));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + f.config + ": " + e.what());
    }
    spec = spec_from_json(j);
  }
  if (!f.scenario.empty()) spec.scenario = scenario_from_string(f.scenario);
  if (f.seed) spec.seed = *f.seed;
  if (f.jobs > 0) spec.jobs = f.jobs;
  if (f.include_tangent) spec.include_tangent = true;
  if (f.per_epoch_noise) spec.per_epoch_noise = true;
  spec.validate();
  return spec;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    text::write_file(path, content);
  }
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void add_spec_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON); flags override its fields")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed controlling all randomness");
  cmd->add_option("--scenario", f.scenario, "Scenario: noiseless, noisy or trend")
      ->check(CLI::IsMember({"noiseless", "noisy", "trend"}));
  cmd->add_flag("--include-tangent", f.include_tangent, "Include the tangent waveform in generated suites");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perigen: periodic extrapolation benchmark generator and model trainer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  CommonFlags gen_f;
  auto* gen = app.add_subcommand("gen", "Generate a benchmark suite and write its manifest");
  add_spec_flags(gen, gen_f);
  gen->add_option("--out", gen_f.out, "Manifest path (default: stdout)");

  CommonFlags run_f;
  std::string run_manifest, checkpoint_dir, log_dir;
  auto* run = app.add_subcommand("run", "Train and evaluate every roster cell and write the records file");
  add_spec_flags(run, run_f);
  run->add_option("--manifest", run_manifest, "Run the suite stored in a manifest instead of generating one")
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_f.out, "Records file path (default: stdout)");
  run->add_option("--jobs", run_f.jobs, "Worker bound (default: PERIGEN_JOBS, then hardware threads)");
  run->add_flag("--per-epoch-noise", run_f.per_epoch_noise, "Redraw training noise every epoch");
  run->add_option("--checkpoint-dir", checkpoint_dir, "Write every trained model as JSON into this directory");
  run->add_option("--log-dir", log_dir, "Write population evolution logs into this directory");

  std::string records_path, report_out;
  auto* report = app.add_subcommand("report", "Aggregate a records file into the summary tables");
  report->add_option("records", records_path, "Records file written by run")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Output prefix; writes PREFIX.md and PREFIX.csv (default: markdown to stdout)");

  std::string plot_manifest, plot_out, plot_dir;
  std::vector<std::string> plot_checkpoints;
  int plot_form = 0, plot_variant = 0;
  auto* plot = app.add_subcommand("plot", "Plot a suite variant against trained model predictions (SVG)");
  plot->add_option("--manifest", plot_manifest, "Suite manifest")->required()->check(CLI::ExistingFile);
  plot->add_option("--form", plot_form, "Form id of the variant");
  plot->add_option("--variant", plot_variant, "Variant id within the form");
  plot->add_option("--checkpoint", plot_checkpoints, "Model checkpoint to draw (repeatable)")->check(CLI::ExistingFile);
  plot->add_option("--checkpoint-dir", plot_dir, "Draw every checkpoint in this directory trained on the variant")
      ->check(CLI::ExistingDirectory);
  plot->add_option("--out", plot_out, "SVG path (default: stdout)");

  int drift_runs = 100, drift_jobs = 0;
  std::uint64_t drift_seed = 0;
  std::string drift_out;
  auto* drift = app.add_subcommand("snakedrift", "Single snake neuron frequency drift histograms");
  drift->add_option("--runs", drift_runs, "Number of independent runs")->check(CLI::PositiveNumber);
  drift->add_option("--seed", drift_seed, "Master seed");
  drift->add_option("--jobs", drift_jobs, "Worker bound");
  drift->add_option("--out", drift_out, "Histogram CSV path (default: stdout)");

  std::string pop_log, pop_out;
  auto* popplot = app.add_subcommand("popplot", "Plot an evolution log as a population scatter (SVG)");
  popplot->add_option("log", pop_log, "Evolution log CSV")->required()->check(CLI::ExistingFile);
  popplot->add_option("--out", pop_out, "SVG path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      const ExperimentSpec spec = load_spec(gen_f);
      emit(gen_f.out, suite_manifest(spec, build_suite(spec)).dump(2) + "\n");
    } else if (run->parsed()) {
      ExperimentSpec spec;
      std::vector<SuiteEntry> suite;
      if (!run_manifest.empty()) {
        if (!run_f.config.empty() || !run_f.scenario.empty() || run_f.include_tangent)
          throw UsageError("--manifest cannot be combined with --config, --scenario or --include-tangent");
        std::tie(spec, suite) = manifest_from_json(read_json(run_manifest));
        if (run_f.seed) spec.seed = *run_f.seed;
        if (run_f.jobs > 0) spec.jobs = run_f.jobs;
        if (run_f.per_epoch_noise) spec.per_epoch_noise = true;
        spec.validate();
      } else {
        spec = load_spec(run_f);
        suite = build_suite(spec);
      }
      if (spec.jobs == 0) spec.jobs = run_f.jobs;
      RunOptions opts;
      if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);
      if (!log_dir.empty()) fs::create_directories(log_dir);
      opts.on_cell = [&](const RunCell&, const CellOutcome& o) {
        const std::string name = cell_name(o.record);
        if (!checkpoint_dir.empty() && o.model)
          text::write_file((fs::path(checkpoint_dir) / (name + ".json")).string(), model_to_json(*o.model).dump() + "\n");
        if (!log_dir.empty() && !o.evolution_log.empty())
          text::write_file((fs::path(log_dir) / (name + ".csv")).string(), o.evolution_log);
      };
      const auto records = run_experiment(spec, suite, opts);
      emit(run_f.out, records_to_csv(records));
      std::size_t failed = 0;
      for (const auto& r : records) failed += r.failed() ? 1 : 0;
      std::cerr << records.size() << " cells, " << failed << " failed\n";
    } else if (report->parsed()) {
      const auto records = records_from_csv(text::read_file(records_path));
      if (records.empty()) throw Error("records file " + records_path + " contains no records");
      const SummaryTable table = aggregate(records);
      if (report_out.empty()) {
        std::cout << render_markdown(table);
      } else {
        emit(report_out + ".md", render_markdown(table));
        emit(report_out + ".csv", render_csv(table));
      }
    } else if (plot->parsed()) {
      const auto [spec, suite] = manifest_from_json(read_json(plot_manifest));
      const SuiteEntry* entry = nullptr;
      for (const auto& e : suite)
        if (e.form_id == plot_form && e.variant_id == plot_variant) entry = &e;
      if (!entry) throw UsageError("no variant with form " + std::to_string(plot_form) + " and id " +
                                   std::to_string(plot_variant) + " in the manifest");
      std::vector<std::string> paths = plot_checkpoints;
      if (!plot_dir.empty()) {
        const std::string key = "-f" + std::to_string(plot_form) + "-v" + std::to_string(plot_variant) + "-";
        std::vector<std::string> found;
        for (const auto& de : fs::directory_iterator(plot_dir)) {
          const std::string n = de.path().filename().string();
          if (de.path().extension() == ".json" && n.find(key) != std::string::npos) found.push_back(de.path().string());
        }
        std::ranges::sort(found);
        paths.insert(paths.end(), found.begin(), found.end());
      }
      std::vector<TrainedModel> models;
      for (const auto& p : paths) models.push_back(model_from_json(read_json(p)));
      std::vector<NamedPredictor> preds;
      for (std::size_t i = 0; i < models.size(); ++i)
        preds.push_back({fs::path(paths[i]).stem().string(), [m = &models[i]](double x) { return (*m)(x); }});
      const Domain d = entry->variant.domain(spec.train_periods, spec.eval_periods);
      emit(plot_out, plot_predictions(entry->variant, d, spec.sampling_rate, preds));
    } else if (drift->parsed()) {
      DriftConfig cfg;
      cfg.runs = drift_runs;
      cfg.seed = drift_seed;
      cfg.jobs = drift_jobs;
      const DriftResult r = snake_drift(cfg);
      emit(drift_out, drift_histogram_csv(r));
      std::cerr << "found fraction (|a - 1| < " << r.tolerance << "): " << r.found_fraction() << "\n";
    } else if (popplot->parsed()) {
      emit(pop_out, plot_population(parse_evolution_log(text::read_file(pop_log))));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
