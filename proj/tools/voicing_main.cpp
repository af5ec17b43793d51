// Consonant-voicing pipeline CLI: synth, landmarks, extract, train, evaluate
// and report subcommands over a shared config file. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voicing/pipeline.hpp"

namespace {

using voicing::cli::Pipeline;
using voicing::cli::PipelineConfig;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string corpus_dir;
  std::string variant;
  std::string model;
  std::string out_dir;
  bool force = false;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Pipeline config file (INI sections)");
  cmd->add_option("--seed", args.seed, "Seed propagated to every stochastic component");
  cmd->add_option("--out", args.out_dir, "Output directory (overrides [output] dir)");
  cmd->add_flag("--force", args.force, "Skip staleness checks on upstream outputs");
  cmd->add_option("--jobs", args.jobs, "Worker threads for per-utterance extraction");
}

PipelineConfig make_config(const CommonArgs& args) {
  PipelineConfig config;
  if (!args.config_path.empty()) config = PipelineConfig::load(args.config_path);
  if (args.seed) config.apply_seed(*args.seed);
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (args.jobs) config.jobs = *args.jobs;
  if (!args.variant.empty()) {
    const auto variant = voicing::features::variant_from(args.variant);
    if (!variant) throw voicing::UsageError("unknown feature variant `" + args.variant + "`");
    config.variant = *variant;
  }
  if (!args.model.empty()) {
    const auto family = voicing::models::family_from(args.model);
    if (!family) throw voicing::UsageError("unknown model family `" + args.model + "`");
    config.family = *family;
  }
  return config;
}

std::string require_out(const PipelineConfig& config) {
  if (config.out_dir.empty())
    throw voicing::UsageError("no output directory: pass --out or set [output] dir");
  return config.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Consonant voicing classification pipeline: landmark-anchored cues, MFCC\n"
      "variants and raw spectra into SVM / feedforward / CNN classifiers with\n"
      "cross-corpus evaluation.\n\n"
      "Config file keys (see data/example_config.ini for the annotated form):\n"
      "  [corpus]   audio_dir alignment_dir phone_map corpus_id\n"
      "  [synth]    n_utterances tokens_per_utterance f0_lo f0_hi snr_db\n"
      "             class_ratio seed channel_tilt channel_gain_db\n"
      "             noise_band_lo noise_band_hi noise_subbands\n"
      "  [features] variant\n"
      "  [model]    family svm_c svm_gamma grid_search class_weighting\n"
      "  [train]    max_epochs patience dev_fraction batch_size learning_rate seed\n"
      "  [output]   dir jobs\n"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string model_path, features_csv, landmarks_dir;
  std::vector<std::string> feature_csvs, report_csvs;

  auto* synth = app.add_subcommand(
      "synth", "Generate the deterministic synthetic corpus ([synth] section)");
  add_common(synth, args);

  auto* landmarks = app.add_subcommand(
      "landmarks", "Derive per-utterance landmark files from alignments");
  add_common(landmarks, args);
  landmarks->add_option("--corpus", args.corpus_dir, "Corpus directory (wav/ + phn/)")
      ->required();

  auto* extract = app.add_subcommand(
      "extract", "Extract one feature variant into a CSV matrix");
  add_common(extract, args);
  extract->add_option("--corpus", args.corpus_dir, "Corpus directory (wav/ + phn/)")
      ->required();
  extract->add_option("--landmarks", landmarks_dir,
                      "Landmarks stage output directory (defaults to --out)");
  extract->add_option("--variant", args.variant,
                      "cues|mc13_whole|mc13_region|mc39_whole|mc39_region|fft1024|fb40");

  auto* train = app.add_subcommand("train", "Train one model family on a feature CSV");
  add_common(train, args);
  train->add_option("--features", features_csv, "Training feature CSV")->required();
  train->add_option("--model", args.model, "svm|mlp|cnn");

  auto* evaluate = app.add_subcommand(
      "evaluate", "Evaluate a model artifact on one or more corpora "
                  "(first CSV = reference language)");
  add_common(evaluate, args);
  evaluate->add_option("--model", model_path, "Model artifact (JSON)")->required();
  evaluate->add_option("--features", feature_csvs, "Feature CSVs, reference first")
      ->required()
      ->expected(-1);

  auto* report = app.add_subcommand(
      "report", "Merge evaluate outputs into one increment table");
  add_common(report, args);
  report->add_option("csvs", report_csvs, "report.csv files from evaluate runs")
      ->required()
      ->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = make_config(args);
    Pipeline pipeline(config);
    if (synth->parsed()) {
      pipeline.synth(require_out(config));
    } else if (landmarks->parsed()) {
      pipeline.landmarks(args.corpus_dir, require_out(config), args.force);
    } else if (extract->parsed()) {
      const auto out = require_out(config);
      const auto lm_dir = landmarks_dir.empty() ? out : landmarks_dir;
      const auto csv = pipeline.extract(args.corpus_dir, lm_dir, config.variant, out, args.force);
      std::cout << csv.string() << "\n";
    } else if (train->parsed()) {
      const auto artifact =
          pipeline.train(features_csv, config.family, require_out(config), args.force);
      std::cout << artifact.string() << "\n";
    } else if (evaluate->parsed()) {
      std::vector<std::filesystem::path> csvs(feature_csvs.begin(), feature_csvs.end());
      const auto out = pipeline.evaluate(model_path, csvs, require_out(config), args.force);
      std::cout << out.string() << "\n";
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> csvs(report_csvs.begin(), report_csvs.end());
      const auto out = Pipeline::report(csvs, require_out(config));
      std::cout << out.string() << "\n";
    }
  } catch (const voicing::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const voicing::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const voicing::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
