#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "voicing/pipeline.hpp"

using namespace voicing;
using namespace voicing::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(bool(out));
  out << text;
}

PipelineConfig tiny_config() {
  PipelineConfig config;
  config.synth.n_utterances = 6;
  config.synth.tokens_per_utterance = 4;
  config.synth.seed = 11;
  config.train.max_epochs = 10;
  config.train.patience = 5;
  config.train.seed = 11;
  return config;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("config parsing") {
  SUBCASE("sections and keys") {
    const auto config = PipelineConfig::parse(
        "# comment\n"
        "[corpus]\n"
        "alignment_dir = phn\n"
        "corpus_id = english\n"
        "[synth]\n"
        "n_utterances = 9\n"
        "f0_lo = 90\n"
        "[features]\n"
        "variant = mc39_region\n"
        "[model]\n"
        "family = cnn\n"
        "class_weighting = off\n"
        "[train]\n"
        "seed = 77\n"
        "batch_size = 8\n"
        "[output]\n"
        "dir = out\n"
        "jobs = 3\n");
    CHECK(config.alignment_dir == "phn");
    CHECK(config.corpus_id == "english");
    CHECK(config.synth.n_utterances == 9);
    CHECK(config.synth.f0_lo_hz == 90.0);
    CHECK(config.variant == features::FeatureVariant::kMc39Region);
    CHECK(config.family == models::ModelFamily::kCnn);
    REQUIRE(config.train.class_weighting.has_value());
    CHECK(*config.train.class_weighting == false);
    CHECK(config.train.seed == 77);
    CHECK(config.train.batch_size == 8);
    CHECK(config.out_dir == "out");
    CHECK(config.jobs == 3);
  }

  SUBCASE("unknown keys are usage errors") {
    CHECK_THROWS_AS(PipelineConfig::parse("[corpus]\naudiodir = x\n"), UsageError);
    CHECK_THROWS_AS(PipelineConfig::parse("stray = 1\n"), UsageError);
  }

  SUBCASE("seed propagation") {
    auto config = tiny_config();
    config.apply_seed(99);
    CHECK(config.synth.seed == 99);
    CHECK(config.train.seed == 99);
  }

  SUBCASE("canonical form is stable and hashable") {
    const auto a = tiny_config();
    auto b = tiny_config();
    CHECK(a.hash() == b.hash());
    b.train.seed = 12;
    CHECK(a.hash() != b.hash());
  }
}

TEST_CASE("landmarks stage") {
  const auto fixture = fs::path(TEST_DATA_DIR) / "toy_corpus";

  SUBCASE("toy corpus produces one landmark file per utterance") {
    TempDir out("voicing_lm_stage");
    Pipeline pipeline(tiny_config());
    pipeline.landmarks(fixture, out.path);
    CHECK(fs::exists(out.path / "landmarks" / "utt1.lm"));
    CHECK(fs::exists(out.path / "landmarks" / "utt2.lm"));
    CHECK(fs::exists(out.path / "landmarks" / "utt3.lm"));
    CHECK(fs::exists(out.path / "manifest.json"));
    const auto utt2 = slurp(out.path / "landmarks" / "utt2.lm");
    CHECK(utt2 == "0.1000\tSc\n0.1500\tSr\n0.2750\tV\n");

    // Idempotent rerun.
    const auto before = slurp(out.path / "landmarks" / "utt1.lm");
    pipeline.landmarks(fixture, out.path);
    CHECK(slurp(out.path / "landmarks" / "utt1.lm") == before);
  }

  SUBCASE("empty corpus directory is a data error") {
    TempDir empty("voicing_lm_empty");
    fs::create_directories(empty.path / "phn");
    TempDir out("voicing_lm_empty_out");
    Pipeline pipeline(tiny_config());
    CHECK_THROWS_WITH_AS(pipeline.landmarks(empty.path, out.path),
                         doctest::Contains("no alignments"), DataError);
  }

  SUBCASE("unmapped phones are listed with counts") {
    TempDir corpus("voicing_lm_unmapped");
    fs::create_directories(corpus.path / "phn");
    spill(corpus.path / "phn" / "u1.phn", "0 800 qqq\n800 1600 qqq\n1600 2400 s\n");
    TempDir out("voicing_lm_unmapped_out");
    Pipeline pipeline(tiny_config());
    try {
      pipeline.landmarks(corpus.path, out.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("qqq") != std::string::npos);
      CHECK(msg.find("x2") != std::string::npos);
    }
  }
}

TEST_CASE("extract stage guards") {
  TempDir root("voicing_extract_guards");
  auto config = tiny_config();
  Pipeline pipeline(config);
  const auto corpus_dir = root.path / "corpus";
  pipeline.synth(corpus_dir);

  SUBCASE("missing landmarks stage is a data error") {
    CHECK_THROWS_WITH_AS(pipeline.extract(corpus_dir, root.path / "nowhere",
                                          features::FeatureVariant::kCues, root.path / "out"),
                         doctest::Contains("manifest"), DataError);
  }

  SUBCASE("stale alignments are refused unless forced") {
    const auto stage = root.path / "stage";
    pipeline.landmarks(corpus_dir, stage);
    // Touch one alignment after the landmarks ran.
    const auto victim = corpus_dir / "phn" / "utt0000.phn";
    auto text = slurp(victim);
    spill(victim, text + "\n");
    CHECK_THROWS_WITH_AS(pipeline.extract(corpus_dir, stage, features::FeatureVariant::kCues,
                                          stage),
                         doctest::Contains("stale"), DataError);
    const auto csv = pipeline.extract(corpus_dir, stage, features::FeatureVariant::kCues,
                                      stage, /*force=*/true);
    CHECK(fs::exists(csv));
  }
}

TEST_CASE("feature rows match landmark-region counts") {
  TempDir root("voicing_counts");
  auto config = tiny_config();
  Pipeline pipeline(config);
  const auto corpus_dir = root.path / "corpus";
  const auto stage = root.path / "stage";
  pipeline.synth(corpus_dir);
  pipeline.landmarks(corpus_dir, stage);
  const auto csv =
      pipeline.extract(corpus_dir, stage, features::FeatureVariant::kCues, stage);
  const auto set = features::read_feature_csv(slurp(csv));

  std::size_t obstruent_landmarks = 0;
  for (const auto& entry : fs::directory_iterator(stage / "landmarks")) {
    const auto lms = corpus::read_landmark_file(slurp(entry.path()));
    for (const auto& lm : lms)
      if (corpus::is_obstruent(lm.kind)) ++obstruent_landmarks;
  }
  CHECK(set.rows.size() == obstruent_landmarks);
}

TEST_CASE("parallel extraction matches single-threaded output") {
  TempDir root("voicing_jobs");
  auto config = tiny_config();
  Pipeline serial(config);
  const auto corpus_dir = root.path / "corpus";
  serial.synth(corpus_dir);
  serial.landmarks(corpus_dir, root.path / "s1");
  const auto csv1 = serial.extract(corpus_dir, root.path / "s1",
                                   features::FeatureVariant::kMc13Region, root.path / "s1");
  config.jobs = 3;
  Pipeline threaded(config);
  threaded.landmarks(corpus_dir, root.path / "s3");
  const auto csv3 = threaded.extract(corpus_dir, root.path / "s3",
                                     features::FeatureVariant::kMc13Region, root.path / "s3");
  CHECK(slurp(csv1) == slurp(csv3));
}

TEST_CASE("end-to-end determinism of a full pipeline run") {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  TempDir root("voicing_determinism");
  auto config = tiny_config();
  config.train.max_epochs = 6;

  auto run = [&](const std::string& name) {
    const auto base = root.path / name;
    Pipeline pipeline(config);
    pipeline.synth(base / "corpus");
    pipeline.landmarks(base / "corpus", base / "stage");
    const auto csv = pipeline.extract(base / "corpus", base / "stage",
                                      features::FeatureVariant::kCues, base / "stage");
    const auto model = pipeline.train(csv, models::ModelFamily::kSvm, base / "model");
    const auto report = pipeline.evaluate(model, {csv}, base / "eval");
    return std::tuple{csv, model, report};
  };
  const auto [csv_a, model_a, report_a] = run("a");
  const auto [csv_b, model_b, report_b] = run("b");
  CHECK(slurp(csv_a) == slurp(csv_b));
  CHECK(slurp(model_a) == slurp(model_b));
  CHECK(slurp(report_a) == slurp(report_b));
  CHECK(slurp(csv_a.parent_path() / "manifest.json") ==
        slurp(csv_b.parent_path() / "manifest.json"));
  unsetenv("SOURCE_DATE_EPOCH");
}

TEST_CASE("training on synthetic cue features reaches dev F1 >= 0.9") {
  TempDir root("voicing_dev_f1");
  auto config = tiny_config();
  config.synth.n_utterances = 30;
  Pipeline pipeline(config);
  const auto corpus_dir = root.path / "corpus";
  const auto stage = root.path / "stage";
  pipeline.synth(corpus_dir);
  pipeline.landmarks(corpus_dir, stage);
  const auto csv = pipeline.extract(corpus_dir, stage, features::FeatureVariant::kCues, stage);
  const auto set = features::read_feature_csv(slurp(csv));
  const auto result = models::train(models::ModelFamily::kSvm, set, config.train);
  REQUIRE(!result.log.empty());
  CHECK(result.log.back().dev_f1 >= 0.9);
}

TEST_CASE("report stage merges evaluate outputs into one increment table") {
  TempDir root("voicing_report_merge");
  auto config = tiny_config();
  config.synth.n_utterances = 10;
  Pipeline pipeline(config);
  const auto corpus_dir = root.path / "corpus";
  const auto stage = root.path / "stage";
  pipeline.synth(corpus_dir);
  pipeline.landmarks(corpus_dir, stage);

  std::vector<fs::path> reports;
  int i = 0;
  for (const auto variant :
       {features::FeatureVariant::kCues, features::FeatureVariant::kMc13Region}) {
    const auto csv = pipeline.extract(corpus_dir, stage, variant,
                                      root.path / ("feat" + std::to_string(i)));
    const auto model = pipeline.train(csv, models::ModelFamily::kSvm,
                                      root.path / ("model" + std::to_string(i)));
    reports.push_back(
        pipeline.evaluate(model, {csv, csv}, root.path / ("eval" + std::to_string(i))));
    ++i;
  }
  const auto table = Pipeline::report(reports, root.path / "merged");
  CHECK(fs::exists(table));
  CHECK(fs::exists(root.path / "merged" / "increment_table.txt"));
  const auto csv_text = slurp(table);
  CHECK(csv_text.find("cues,svm") != std::string::npos);
  CHECK(csv_text.find("mc13_region,svm") != std::string::npos);
}

TEST_CASE("evaluate refuses mismatched variants") {
  TempDir root("voicing_variant_mismatch");
  auto config = tiny_config();
  Pipeline pipeline(config);
  const auto corpus_dir = root.path / "corpus";
  const auto stage = root.path / "stage";
  pipeline.synth(corpus_dir);
  pipeline.landmarks(corpus_dir, stage);
  const auto cues_csv =
      pipeline.extract(corpus_dir, stage, features::FeatureVariant::kCues, stage);
  const auto fb_csv = pipeline.extract(corpus_dir, stage, features::FeatureVariant::kFb40,
                                       root.path / "stage_fb");
  const auto model = pipeline.train(cues_csv, models::ModelFamily::kSvm, root.path / "model");
  try {
    pipeline.evaluate(model, {fb_csv}, root.path / "eval");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cues") != std::string::npos);
    CHECK(msg.find("fb40") != std::string::npos);
  }
}

TEST_SUITE_END();
