#pragma once

#include <filesystem>

#include "voicing/eval.hpp"
#include "voicing/synth.hpp"

// Pipeline orchestration shared by the CLI and the acceptance suite: config
// file parsing, run manifests with checksum-based staleness detection, and
// the six stages (synth, landmarks, extract, train, evaluate, report).

namespace voicing::cli {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineConfig {
  // [corpus]
  std::string audio_dir;       // defaults to <corpus>/wav at stage level
  std::string alignment_dir;   // defaults to <corpus>/phn
  std::string phone_map_path;  // empty selects the built-in English map
  std::string corpus_id;       // empty derives from the corpus directory name
  // [synth]
  corpus::SynthSpec synth;
  // [features]
  features::FeatureVariant variant = features::FeatureVariant::kCues;
  // [model] + [train]
  models::ModelFamily family = models::ModelFamily::kSvm;
  models::TrainConfig train;
  // [output]
  std::string out_dir;
  int jobs = 1;

  // Flat INI: `[section]` headers and `key = value` lines, '#' comments.
  // Unknown keys are usage errors.
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);

  // Propagates one global seed to every stochastic component.
  void apply_seed(std::uint64_t seed);

  std::string canonical() const;  // deterministic key=value dump
  std::string hash() const { return to_hex(fnv1a64(canonical())); }

  corpus::PhoneClassMap load_phone_map() const;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kVersion;
  std::string created;  // ISO-8601 UTC; honors SOURCE_DATE_EPOCH
  // Input inventory: path relative to the manifest's directory -> checksum.
  std::vector<std::pair<std::string, std::string>> inputs;
};

std::string file_checksum(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& dir, RunManifest manifest);
RunManifest read_manifest(const std::filesystem::path& dir);

// Recomputes the recorded input checksums; throws DataError when the
// upstream outputs are stale or the manifest is missing.
void verify_manifest(const std::filesystem::path& dir, const std::string& what);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }

  // Generates the synthetic corpus (wav/, phn/, truth.csv, manifest).
  void synth(const std::filesystem::path& out_dir) const;

  // One landmark file per utterance under <out>/landmarks/. Unmapped phones
  // are collected and reported with counts.
  void landmarks(const std::filesystem::path& corpus_dir,
                 const std::filesystem::path& out_dir, bool force = false) const;

  // Feature CSV for one variant; requires a valid landmarks stage unless
  // forced. Returns the CSV path.
  std::filesystem::path extract(const std::filesystem::path& corpus_dir,
                                const std::filesystem::path& landmarks_dir,
                                features::FeatureVariant variant,
                                const std::filesystem::path& out_dir,
                                bool force = false) const;

  // Trains one family on a feature CSV. Returns the artifact path.
  std::filesystem::path train(const std::filesystem::path& features_csv,
                              models::ModelFamily family,
                              const std::filesystem::path& out_dir,
                              bool force = false) const;

  // Evaluates an artifact on one or more feature CSVs; the first is the
  // reference corpus. Returns the report CSV path.
  std::filesystem::path evaluate(const std::filesystem::path& model_path,
                                 const std::vector<std::filesystem::path>& feature_csvs,
                                 const std::filesystem::path& out_dir,
                                 bool force = false) const;

  // Merges several evaluate outputs into one increment table.
  static std::filesystem::path report(const std::vector<std::filesystem::path>& report_csvs,
                                      const std::filesystem::path& out_dir);

 private:
  PipelineConfig config_;
};

}  // namespace voicing::cli
