#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voicing/corpus.hpp"
#include "voicing/dsp.hpp"

// The competing feature representations per classification sample: the
// 8-dimensional manual cue vector, MFCC variants (13/39, whole phone or
// landmark region), and raw spectral inputs for the neural models; plus the
// train-set standardizer and feature-matrix persistence.

namespace voicing::features {

enum class FeatureVariant {
  kCues,
  kMc13Whole,
  kMc13Region,
  kMc39Whole,
  kMc39Region,
  kFft1024,
  kFb40,
};

std::string to_string(FeatureVariant variant);
std::optional<FeatureVariant> variant_from(const std::string& token);
std::size_t dimension(FeatureVariant variant);  // 8 / 13 / 13 / 39 / 39 / 513 / 40
const std::vector<FeatureVariant>& all_variants();

// The four MFCC flavours: 13 static or 39 with dynamics, spanning either the
// whole phone or the 20 ms landmark region.
enum class MfccVariant { kMc13Whole, kMc13Region, kMc39Whole, kMc39Region };

FeatureVariant to_feature_variant(MfccVariant variant);

struct CueVector {
  double rms = 0.0;
  double e1 = 0.0;       // 0-400 Hz band energy
  double e2 = 0.0;       // 2-7 kHz band energy
  double e_ratio = 0.0;  // e1 / (e2 + eps)
  double pncc = 0.0;     // peak normalized cross-correlation over the region
  double h1 = 0.0;       // spectral magnitude at the tracked F0, 0 if unvoiced
  double vot_s = 0.0;    // duration cue (VOT for stops)
  double formant_transition_hz_per_s = 0.0;  // F1 slope into the adjacent vowel

  std::array<double, 8> as_array() const {
    return {rms, e1, e2, e_ratio, pncc, h1, vot_s, formant_transition_hz_per_s};
  }
};

struct CueConfig {
  double e_ratio_epsilon = 1e-12;
  std::size_t filter_context_samples = 512;  // warm-up prepended before band filtering
  double pitch_context_s = 0.030;            // audio pulled in around the region
  double transition_span_s = 0.040;          // F1 slope window straddling the landmark
  double lpc_frame_s = 0.020;
  double lpc_hop_s = 0.005;
  int lpc_order = 12;
  // Longer correlation window than the tracker default; band-limited noise
  // keeps its NCCF peaks well under the voicing threshold this way.
  dsp::PitchConfig pitch = {.corr_window_s = 0.025};
};

// Owns the designed E1/E2 filters; everything else is stateless, so one
// extractor can serve many threads.
class CueExtractor {
 public:
  explicit CueExtractor(double sample_rate, CueConfig config = {});

  // `segment` is the duration-bearing segment for the VOT cue: the region's
  // own phone, except for stop-closure regions where the caller passes the
  // matching release segment when one exists. Every cue has a defined
  // degenerate fallback, so this never throws on silent or clipped regions.
  CueVector manual_cues(const corpus::LandmarkRegion& region,
                        const corpus::PhoneSegment& segment,
                        const corpus::PhoneSegment* adjacent_vowel,
                        const Signal& audio) const;

 private:
  double sample_rate_;
  CueConfig config_;
  dsp::IirFilter e1_filter_;
  dsp::IirFilter e2_filter_;
};

struct RawInput {
  enum class Kind { kFft1024, kFb40 };
  Kind kind = Kind::kFft1024;
  std::vector<double> values;  // 513 magnitudes or 40 log filterbank energies
};

// Hamming over the full region, zero-pad to 1024, magnitude FFT; FB40 applies
// the filterbank and log-compresses with a 1e-10 floor.
RawInput raw_nn_input(const corpus::LandmarkRegion& region, RawInput::Kind kind,
                      const dsp::MelFilterbank& filterbank);

// The spanning window (region or whole phone) framed at 10 ms / 5 ms,
// per-frame MFCC(13), deltas and delta-deltas appended for 39-dim variants,
// then the mean over frames. Spans shorter than one frame are zero-padded to
// a single frame.
std::vector<double> mfcc_features(const Signal& audio, double sample_rate,
                                  const corpus::PhoneSegment& segment,
                                  const corpus::LandmarkRegion& region,
                                  MfccVariant variant,
                                  const dsp::MelFilterbank& filterbank,
                                  const dsp::MfccConfig& config = {});

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std_dev;  // floored at a small epsilon when fitting

  std::size_t dim() const { return mean.size(); }
  std::vector<double> apply(std::span<const double> x) const;
};

// Per-dimension mean and population standard deviation; needs >= 2 rows.
// Constant dimensions get a floored deviation and map to 0.
Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows);

struct FeatureRow {
  std::string utterance_id;
  double landmark_time_s = 0.0;
  corpus::LandmarkType landmark_type = corpus::LandmarkType::kV;
  corpus::Voicing label = corpus::Voicing::kNone;
  std::vector<double> values;
};

struct FeatureSet {
  FeatureVariant variant = FeatureVariant::kCues;
  std::string corpus_id;
  std::vector<FeatureRow> rows;

  std::size_t dim() const { return dimension(variant); }
};

// CSV with a `# dim=<d> variant=<v> corpus=<id>` comment line, then a header
// row `utterance_id,landmark_time,landmark_type,label,f_0,...`.
std::string write_feature_csv(const FeatureSet& set);
FeatureSet read_feature_csv(const std::string& text);

// Pipeline-level assembly: resolves the VOT-bearing segment and the adjacent
// vowel per region, then emits one feature row per obstruent landmark region.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(
      double sample_rate = kTargetSampleRate,
      corpus::PhoneClassMap map = corpus::PhoneClassMap::default_english());

  std::vector<double> extract(FeatureVariant variant, const Signal& audio,
                              const std::vector<corpus::PhoneSegment>& segments,
                              const corpus::LandmarkRegion& region) const;

  FeatureSet extract_all(FeatureVariant variant, const Signal& audio,
                         const std::vector<corpus::PhoneSegment>& segments,
                         const std::vector<corpus::LandmarkRegion>& regions) const;

  const dsp::MelFilterbank& filterbank() const { return filterbank_; }

 private:
  double sample_rate_;
  corpus::PhoneClassMap map_;
  dsp::MelFilterbank filterbank_;
  CueExtractor cues_;
};

}  // namespace voicing::features
