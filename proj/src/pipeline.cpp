#include "voicing/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "voicing/wav.hpp"

namespace voicing::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw UsageError("config: key `" + key + "` expects a boolean, got `" + value + "`");
}

// Runs fn(0..n-1) across `jobs` threads; results land in index order, so the
// output is identical regardless of pool size.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, int(n));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct UtteranceFiles {
  std::string id;
  fs::path alignment;
  fs::path audio;  // may be empty when only alignments are needed
};

std::vector<UtteranceFiles> list_utterances(const fs::path& alignment_dir,
                                            const fs::path& audio_dir,
                                            bool need_audio) {
  if (!fs::is_directory(alignment_dir))
    throw DataError("no alignments found: " + alignment_dir.string() + " is not a directory");
  std::vector<UtteranceFiles> utterances;
  for (const auto& entry : fs::directory_iterator(alignment_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".phn") continue;
    UtteranceFiles files;
    files.id = entry.path().stem().string();
    files.alignment = entry.path();
    if (need_audio) {
      files.audio = audio_dir / (files.id + ".wav");
      if (!fs::exists(files.audio))
        throw DataError("missing audio for utterance `" + files.id +
                        "`: " + files.audio.string());
    }
    utterances.push_back(std::move(files));
  }
  if (utterances.empty())
    throw DataError("no alignments found under " + alignment_dir.string());
  std::sort(utterances.begin(), utterances.end(),
            [](const UtteranceFiles& a, const UtteranceFiles& b) { return a.id < b.id; });
  return utterances;
}

std::string manifest_relative(const fs::path& input, const fs::path& dir) {
  const auto rel = fs::path(input).lexically_proximate(dir);
  return rel.generic_string();
}

}  // namespace

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string body = line.substr(first, last - first + 1);
    if (body.front() == '[') {
      if (body.back() != ']')
        throw UsageError("config line " + std::to_string(line_no) + ": unterminated section");
      section = body.substr(1, body.size() - 2);
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected `key = value`");
    auto trim = [](std::string s) {
      const auto lo = s.find_first_not_of(" \t");
      const auto hi = s.find_last_not_of(" \t");
      return lo == std::string::npos ? std::string() : s.substr(lo, hi - lo + 1);
    };
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const std::string qualified = section.empty() ? key : section + "." + key;

    if (qualified == "corpus.audio_dir") {
      config.audio_dir = value;
    } else if (qualified == "corpus.alignment_dir") {
      config.alignment_dir = value;
    } else if (qualified == "corpus.phone_map") {
      config.phone_map_path = value;
    } else if (qualified == "corpus.corpus_id") {
      config.corpus_id = value;
    } else if (qualified == "synth.n_utterances") {
      config.synth.n_utterances = std::stoul(value);
    } else if (qualified == "synth.tokens_per_utterance") {
      config.synth.tokens_per_utterance = std::stoul(value);
    } else if (qualified == "synth.f0_lo") {
      config.synth.f0_lo_hz = std::stod(value);
    } else if (qualified == "synth.f0_hi") {
      config.synth.f0_hi_hz = std::stod(value);
    } else if (qualified == "synth.snr_db") {
      config.synth.snr_db = std::stod(value);
    } else if (qualified == "synth.class_ratio") {
      config.synth.class_ratio = std::stod(value);
    } else if (qualified == "synth.channel_tilt") {
      config.synth.channel_tilt = std::stod(value);
    } else if (qualified == "synth.channel_gain_db") {
      config.synth.channel_gain_db = std::stod(value);
    } else if (qualified == "synth.noise_band_lo") {
      config.synth.noise_band_lo_hz = std::stod(value);
    } else if (qualified == "synth.noise_band_hi") {
      config.synth.noise_band_hi_hz = std::stod(value);
    } else if (qualified == "synth.noise_subbands") {
      config.synth.noise_subbands = std::stoi(value);
    } else if (qualified == "synth.seed") {
      config.synth.seed = std::stoull(value);
    } else if (qualified == "features.variant") {
      const auto variant = features::variant_from(value);
      if (!variant) throw UsageError("config: unknown feature variant `" + value + "`");
      config.variant = *variant;
    } else if (qualified == "model.family") {
      const auto family = models::family_from(value);
      if (!family) throw UsageError("config: unknown model family `" + value + "`");
      config.family = *family;
    } else if (qualified == "model.svm_c") {
      config.train.svm_c = std::stod(value);
    } else if (qualified == "model.svm_gamma") {
      config.train.svm_gamma = std::stod(value);
    } else if (qualified == "model.grid_search") {
      config.train.svm_grid_search = parse_bool(value, qualified);
    } else if (qualified == "model.class_weighting") {
      if (value == "default")
        config.train.class_weighting.reset();
      else
        config.train.class_weighting = parse_bool(value, qualified);
    } else if (qualified == "train.max_epochs") {
      config.train.max_epochs = std::stoi(value);
    } else if (qualified == "train.patience") {
      config.train.patience = std::stoi(value);
    } else if (qualified == "train.dev_fraction") {
      config.train.dev_fraction = std::stod(value);
    } else if (qualified == "train.batch_size") {
      config.train.batch_size = std::stoi(value);
    } else if (qualified == "train.learning_rate") {
      config.train.learning_rate = std::stod(value);
    } else if (qualified == "train.seed") {
      config.train.seed = std::stoull(value);
    } else if (qualified == "output.dir") {
      config.out_dir = value;
    } else if (qualified == "output.jobs") {
      config.jobs = std::stoi(value);
    } else {
      throw UsageError("config: unknown key `" + qualified + "`");
    }
  }
  return config;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  try {
    return parse(slurp(path));
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

void PipelineConfig::apply_seed(std::uint64_t seed) {
  synth.seed = seed;
  train.seed = seed;
}

std::string PipelineConfig::canonical() const {
  std::string out;
  out += "corpus.audio_dir=" + audio_dir + "\n";
  out += "corpus.alignment_dir=" + alignment_dir + "\n";
  out += "corpus.phone_map=" + phone_map_path + "\n";
  out += "corpus.corpus_id=" + corpus_id + "\n";
  out += "synth.n_utterances=" + std::to_string(synth.n_utterances) + "\n";
  out += "synth.tokens_per_utterance=" + std::to_string(synth.tokens_per_utterance) + "\n";
  out += "synth.f0_lo=" + format_double(synth.f0_lo_hz) + "\n";
  out += "synth.f0_hi=" + format_double(synth.f0_hi_hz) + "\n";
  out += "synth.snr_db=" + format_double(synth.snr_db) + "\n";
  out += "synth.class_ratio=" + format_double(synth.class_ratio) + "\n";
  out += "synth.channel_tilt=" + format_double(synth.channel_tilt) + "\n";
  out += "synth.channel_gain_db=" + format_double(synth.channel_gain_db) + "\n";
  out += "synth.noise_band_lo=" + format_double(synth.noise_band_lo_hz) + "\n";
  out += "synth.noise_band_hi=" + format_double(synth.noise_band_hi_hz) + "\n";
  out += "synth.noise_subbands=" + std::to_string(synth.noise_subbands) + "\n";
  out += "synth.seed=" + std::to_string(synth.seed) + "\n";
  out += "features.variant=" + features::to_string(variant) + "\n";
  out += "model.family=" + models::to_string(family) + "\n";
  out += "model.svm_c=" + format_double(train.svm_c) + "\n";
  out += "model.svm_gamma=" + format_double(train.svm_gamma) + "\n";
  out += std::string("model.grid_search=") + (train.svm_grid_search ? "true" : "false") + "\n";
  out += std::string("model.class_weighting=") +
         (train.class_weighting ? (*train.class_weighting ? "true" : "false") : "default") + "\n";
  out += "train.max_epochs=" + std::to_string(train.max_epochs) + "\n";
  out += "train.patience=" + std::to_string(train.patience) + "\n";
  out += "train.dev_fraction=" + format_double(train.dev_fraction) + "\n";
  out += "train.batch_size=" + std::to_string(train.batch_size) + "\n";
  out += "train.learning_rate=" + format_double(train.learning_rate) + "\n";
  out += "train.seed=" + std::to_string(train.seed) + "\n";
  out += "output.dir=" + out_dir + "\n";
  out += "output.jobs=" + std::to_string(jobs) + "\n";
  return out;
}

corpus::PhoneClassMap PipelineConfig::load_phone_map() const {
  if (phone_map_path.empty()) return corpus::PhoneClassMap::default_english();
  return corpus::PhoneClassMap::load(phone_map_path);
}

std::string file_checksum(const fs::path& path) {
  return to_hex(fnv1a64(slurp(path)));
}

namespace {

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    now = std::time_t(std::strtoll(epoch, nullptr, 10));
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_manifest(const fs::path& dir, RunManifest manifest) {
  manifest.created = timestamp_utc();
  json j;
  j["format"] = "voicing-manifest";
  j["version"] = manifest.version;
  j["config_hash"] = manifest.config_hash;
  j["created"] = manifest.created;
  json inputs = json::array();
  for (const auto& [path, checksum] : manifest.inputs)
    inputs.push_back({{"path", path}, {"checksum", checksum}});
  j["inputs"] = inputs;
  spill(dir / "manifest.json", j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw DataError("missing manifest: " + path.string());
  json j = json::parse(slurp(path));
  if (j.value("format", "") != "voicing-manifest")
    throw DataError("not a run manifest: " + path.string());
  RunManifest manifest;
  manifest.version = j.value("version", "");
  manifest.config_hash = j.value("config_hash", "");
  manifest.created = j.value("created", "");
  for (const auto& input : j.at("inputs"))
    manifest.inputs.emplace_back(input.at("path").get<std::string>(),
                                 input.at("checksum").get<std::string>());
  return manifest;
}

void verify_manifest(const fs::path& dir, const std::string& what) {
  RunManifest manifest;
  try {
    manifest = read_manifest(dir);
  } catch (const DataError& e) {
    throw DataError(what + ": " + e.what() + " (run the upstream stage first)");
  }
  for (const auto& [rel, checksum] : manifest.inputs) {
    const auto path = dir / rel;
    if (!fs::exists(path))
      throw DataError(what + ": recorded input " + path.string() +
                      " is gone; rerun the upstream stage or pass --force");
    if (file_checksum(path) != checksum)
      throw DataError(what + ": " + path.string() +
                      " changed since the stage ran (stale outputs); rerun or pass --force");
  }
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {}

void Pipeline::synth(const fs::path& out_dir) const {
  const auto corpus = corpus::synthesize_corpus(config_.synth);
  fs::create_directories(out_dir);
  corpus::write_synth_corpus(corpus, out_dir);
  RunManifest manifest;
  manifest.config_hash = config_.hash();
  write_manifest(out_dir, manifest);
}

void Pipeline::landmarks(const fs::path& corpus_dir, const fs::path& out_dir,
                         bool force) const {
  const auto alignment_dir =
      config_.alignment_dir.empty() ? corpus_dir / "phn" : fs::path(config_.alignment_dir);
  const auto utterances = list_utterances(alignment_dir, {}, false);
  const auto map = config_.load_phone_map();

  const auto landmark_dir = out_dir / "landmarks";
  if (!force && fs::exists(out_dir / "manifest.json")) verify_manifest(out_dir, "landmarks");
  fs::create_directories(landmark_dir);

  std::map<std::string, std::size_t> unmapped;
  RunManifest manifest;
  manifest.config_hash = config_.hash();
  for (const auto& utt : utterances) {
    const auto segments =
        corpus::parse_alignment(slurp(utt.alignment), kTargetSampleRate, utt.id);
    bool ok = true;
    for (const auto& seg : segments)
      if (!map.find(seg.label)) {
        ++unmapped[seg.label];
        ok = false;
      }
    if (!ok) continue;
    const auto lms = corpus::derive_landmarks(segments, map);
    spill(landmark_dir / (utt.id + ".lm"), corpus::write_landmark_file(lms));
    manifest.inputs.emplace_back(manifest_relative(utt.alignment, out_dir),
                                 file_checksum(utt.alignment));
  }
  if (!unmapped.empty()) {
    std::string msg = "unmapped phones:";
    for (const auto& [phone, count] : unmapped)
      msg += " `" + phone + "` x" + std::to_string(count);
    throw DataError(msg);
  }
  if (!config_.phone_map_path.empty())
    manifest.inputs.emplace_back(manifest_relative(config_.phone_map_path, out_dir),
                                 file_checksum(config_.phone_map_path));
  write_manifest(out_dir, manifest);
}

fs::path Pipeline::extract(const fs::path& corpus_dir, const fs::path& landmarks_dir,
                           features::FeatureVariant variant, const fs::path& out_dir,
                           bool force) const {
  const auto alignment_dir =
      config_.alignment_dir.empty() ? corpus_dir / "phn" : fs::path(config_.alignment_dir);
  const auto audio_dir =
      config_.audio_dir.empty() ? corpus_dir / "wav" : fs::path(config_.audio_dir);
  if (!force) verify_manifest(landmarks_dir, "extract");

  const auto utterances = list_utterances(alignment_dir, audio_dir, true);
  for (const auto& utt : utterances) {
    const auto lm_file = landmarks_dir / "landmarks" / (utt.id + ".lm");
    if (!force && !fs::exists(lm_file))
      throw DataError("extract: missing landmark file " + lm_file.string() +
                      " (run the landmarks stage first)");
  }

  const auto map = config_.load_phone_map();
  const features::FeatureExtractor extractor(kTargetSampleRate, map);

  std::vector<features::FeatureSet> per_utterance(utterances.size());
  parallel_for(utterances.size(), config_.jobs, [&](std::size_t i) {
    const auto& utt = utterances[i];
    const auto audio = wav::read_wav_at(utt.audio, kTargetSampleRate);
    const auto segments =
        corpus::parse_alignment(slurp(utt.alignment), kTargetSampleRate, utt.id);
    const auto lms = corpus::derive_landmarks(segments, map);
    const auto regions =
        corpus::extract_regions(audio.samples, kTargetSampleRate, segments, lms, map);
    per_utterance[i] = extractor.extract_all(variant, audio.samples, segments, regions);
  });

  features::FeatureSet merged;
  merged.variant = variant;
  merged.corpus_id = config_.corpus_id.empty()
                         ? fs::absolute(corpus_dir).filename().string()
                         : config_.corpus_id;
  for (auto& set : per_utterance)
    for (auto& row : set.rows) merged.rows.push_back(std::move(row));

  fs::create_directories(out_dir);
  const auto csv_path = out_dir / ("features_" + features::to_string(variant) + ".csv");
  spill(csv_path, features::write_feature_csv(merged));

  RunManifest manifest;
  manifest.config_hash = config_.hash();
  for (const auto& utt : utterances) {
    manifest.inputs.emplace_back(manifest_relative(utt.alignment, out_dir),
                                 file_checksum(utt.alignment));
    manifest.inputs.emplace_back(manifest_relative(utt.audio, out_dir),
                                 file_checksum(utt.audio));
  }
  write_manifest(out_dir, manifest);
  return csv_path;
}

fs::path Pipeline::train(const fs::path& features_csv, models::ModelFamily family,
                         const fs::path& out_dir, bool force) const {
  if (!force && fs::exists(features_csv.parent_path() / "manifest.json"))
    verify_manifest(features_csv.parent_path(), "train");
  const auto set = features::read_feature_csv(slurp(features_csv));
  const auto result = models::train(family, set, config_.train);

  fs::create_directories(out_dir);
  const auto model_path = out_dir / ("model_" + models::to_string(family) + "_" +
                                     features::to_string(set.variant) + ".json");
  models::save_model(result.artifact, model_path);
  spill(out_dir / "training_log.csv", models::training_log_csv(result.log));

  RunManifest manifest;
  manifest.config_hash = config_.hash();
  manifest.inputs.emplace_back(manifest_relative(features_csv, out_dir),
                               file_checksum(features_csv));
  write_manifest(out_dir, manifest);
  return model_path;
}

fs::path Pipeline::evaluate(const fs::path& model_path,
                            const std::vector<fs::path>& feature_csvs,
                            const fs::path& out_dir, bool force) const {
  if (feature_csvs.empty()) throw UsageError("evaluate: need at least one feature CSV");
  const auto artifact = models::load_model(model_path);

  std::vector<eval::EvalReport> reports;
  for (const auto& csv : feature_csvs) {
    if (!force && fs::exists(csv.parent_path() / "manifest.json"))
      verify_manifest(csv.parent_path(), "evaluate");
    const auto set = features::read_feature_csv(slurp(csv));
    if (set.variant != artifact.variant)
      throw DataError("evaluate: model was trained on variant " +
                      features::to_string(artifact.variant) + " but " + csv.string() +
                      " holds " + features::to_string(set.variant));
    std::vector<corpus::Voicing> predictions, labels;
    for (const auto& row : set.rows) {
      predictions.push_back(artifact.predict(row.values).label);
      labels.push_back(row.label);
    }
    reports.push_back(eval::make_report(set.corpus_id, set.variant, artifact.family,
                                        eval::confusion(predictions, labels)));
  }
  const auto cross = eval::cross_lingual_report(
      reports.front(), {reports.begin() + 1, reports.end()});

  fs::create_directories(out_dir);
  const auto report_path = out_dir / "report.csv";
  spill(report_path, eval::report_csv(cross));
  spill(out_dir / "report.txt", eval::report_table(cross));

  RunManifest manifest;
  manifest.config_hash = config_.hash();
  manifest.inputs.emplace_back(manifest_relative(model_path, out_dir),
                               file_checksum(model_path));
  for (const auto& csv : feature_csvs)
    manifest.inputs.emplace_back(manifest_relative(csv, out_dir), file_checksum(csv));
  write_manifest(out_dir, manifest);
  return report_path;
}

fs::path Pipeline::report(const std::vector<fs::path>& report_csvs,
                          const fs::path& out_dir) {
  if (report_csvs.empty()) throw UsageError("report: need at least one report CSV");
  std::vector<eval::CrossLingualReport> reports;
  for (const auto& csv : report_csvs)
    reports.push_back(eval::parse_report_csv(slurp(csv)));
  fs::create_directories(out_dir);
  const auto csv_path = out_dir / "increment_table.csv";
  spill(csv_path, eval::increment_table_csv(reports));
  spill(out_dir / "increment_table.txt", eval::increment_table(reports));
  return csv_path;
}

}  // namespace voicing::cli
