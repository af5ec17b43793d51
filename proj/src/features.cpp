#include "voicing/features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace voicing::features {

std::string to_string(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::kCues: return "cues";
    case FeatureVariant::kMc13Whole: return "mc13_whole";
    case FeatureVariant::kMc13Region: return "mc13_region";
    case FeatureVariant::kMc39Whole: return "mc39_whole";
    case FeatureVariant::kMc39Region: return "mc39_region";
    case FeatureVariant::kFft1024: return "fft1024";
    case FeatureVariant::kFb40: return "fb40";
  }
  return "?";
}

std::optional<FeatureVariant> variant_from(const std::string& token) {
  for (const auto variant : all_variants())
    if (to_string(variant) == token) return variant;
  return std::nullopt;
}

std::size_t dimension(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::kCues: return 8;
    case FeatureVariant::kMc13Whole:
    case FeatureVariant::kMc13Region: return 13;
    case FeatureVariant::kMc39Whole:
    case FeatureVariant::kMc39Region: return 39;
    case FeatureVariant::kFft1024: return 513;
    case FeatureVariant::kFb40: return 40;
  }
  return 0;
}

const std::vector<FeatureVariant>& all_variants() {
  static const std::vector<FeatureVariant> variants = {
      FeatureVariant::kCues,      FeatureVariant::kMc13Whole, FeatureVariant::kMc13Region,
      FeatureVariant::kMc39Whole, FeatureVariant::kMc39Region, FeatureVariant::kFft1024,
      FeatureVariant::kFb40};
  return variants;
}

FeatureVariant to_feature_variant(MfccVariant variant) {
  switch (variant) {
    case MfccVariant::kMc13Whole: return FeatureVariant::kMc13Whole;
    case MfccVariant::kMc13Region: return FeatureVariant::kMc13Region;
    case MfccVariant::kMc39Whole: return FeatureVariant::kMc39Whole;
    case MfccVariant::kMc39Region: return FeatureVariant::kMc39Region;
  }
  return FeatureVariant::kMc13Whole;
}

CueExtractor::CueExtractor(double sample_rate, CueConfig config)
    : sample_rate_(sample_rate),
      config_(config),
      e1_filter_(dsp::butterworth_bandpass(
          {.pass_lo = 0.0, .pass_hi = 400.0, .stop_lo = 0.0, .stop_hi = 500.0}, sample_rate)),
      e2_filter_(dsp::butterworth_bandpass(
          {.pass_lo = 2000.0, .pass_hi = 7000.0, .stop_lo = 1500.0, .stop_hi = 7500.0},
          sample_rate)) {}

namespace {

// Audio slice with clamped bounds; indices outside the signal are dropped.
Signal clamped_slice(const Signal& audio, std::int64_t lo, std::int64_t hi) {
  lo = std::max<std::int64_t>(0, lo);
  hi = std::min<std::int64_t>(std::int64_t(audio.size()), hi);
  if (hi <= lo) return {};
  return Signal(audio.begin() + std::ptrdiff_t(lo), audio.begin() + std::ptrdiff_t(hi));
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

}  // namespace

CueVector CueExtractor::manual_cues(const corpus::LandmarkRegion& region,
                                    const corpus::PhoneSegment& segment,
                                    const corpus::PhoneSegment* adjacent_vowel,
                                    const Signal& audio) const {
  CueVector cues;
  const double fs = sample_rate_;
  const auto first = std::llround(region.start_s * fs);

  cues.rms = dsp::rms(region.samples);
  cues.vot_s = segment.duration();

  {
    // Band energies over the region, with filter warm-up context prepended
    // from the source audio when available.
    Signal context = clamped_slice(audio, first - std::int64_t(config_.filter_context_samples),
                                   first);
    Signal buffer = context;
    buffer.insert(buffer.end(), region.samples.begin(), region.samples.end());
    cues.e1 = dsp::band_energy(e1_filter_, buffer, context.size());
    cues.e2 = dsp::band_energy(e2_filter_, buffer, context.size());
    cues.e_ratio = cues.e1 / (cues.e2 + config_.e_ratio_epsilon);
  }

  // Pitch over the region plus surrounding context; frames whose centers fall
  // inside the region decide PNCC and voicing.
  double f0 = 0.0;
  {
    const auto margin = std::int64_t(std::llround(config_.pitch_context_s * fs));
    const std::int64_t lo = std::max<std::int64_t>(0, first - margin);
    Signal buffer = clamped_slice(audio, lo, first + std::int64_t(region.samples.size()) + margin);
    if (!buffer.empty()) {
      const auto track = dsp::track_pitch(buffer, fs, config_.pitch);
      const double rel_start = double(first - lo) / fs;
      const double rel_end = rel_start + corpus::kRegionSeconds;
      double peak = 0.0;
      bool any_in_region = false;
      std::vector<double> voiced_f0;
      for (const auto& frame : track.frames) {
        const bool in_region = frame.time_s >= rel_start && frame.time_s <= rel_end;
        if (!in_region) continue;
        any_in_region = true;
        peak = std::max(peak, frame.nccf_peak);
        if (frame.voiced) voiced_f0.push_back(frame.f0_hz);
      }
      if (!any_in_region) {
        for (const auto& frame : track.frames) peak = std::max(peak, frame.nccf_peak);
      }
      cues.pncc = peak;
      if (!voiced_f0.empty()) f0 = median(std::move(voiced_f0));
    }
  }

  if (f0 > 0.0) {
    const auto window = dsp::hamming_window(region.samples.size());
    Signal tapered(region.samples.size());
    for (std::size_t i = 0; i < tapered.size(); ++i)
      tapered[i] = region.samples[i] * window[i];
    const auto spectrum = dsp::magnitude_fft(tapered, 1024, fs);
    const auto bin = std::min<std::size_t>(
        spectrum.magnitudes.size() - 1, std::size_t(std::llround(f0 / spectrum.bin_hz())));
    cues.h1 = spectrum.magnitudes[bin];
  }

  if (adjacent_vowel) {
    // F1 slope across a window straddling the landmark into the vowel.
    const double t0 = region.landmark.time_s - config_.transition_span_s / 2.0;
    const auto span_len = std::int64_t(std::llround(config_.transition_span_s * fs));
    const auto frame_len = std::int64_t(std::llround(config_.lpc_frame_s * fs));
    const auto hop = std::int64_t(std::llround(config_.lpc_hop_s * fs));
    const auto span_first = std::llround(t0 * fs);
    std::vector<double> times, f1s;
    for (std::int64_t off = 0; off + frame_len <= span_len; off += hop) {
      Signal frame = clamped_slice(audio, span_first + off, span_first + off + frame_len);
      if (std::int64_t(frame.size()) != frame_len) continue;
      try {
        const auto model = dsp::lpc(frame, config_.lpc_order);
        const auto fmts = dsp::formants(model, fs, 1);
        if (fmts.empty()) continue;
        times.push_back(t0 + double(off + frame_len / 2) / fs);
        f1s.push_back(fmts[0]);
      } catch (const NumericError&) {
        continue;  // silent frame; no formant sample
      }
    }
    if (times.size() >= 2) {
      double mean_t = 0.0, mean_f = 0.0;
      for (std::size_t i = 0; i < times.size(); ++i) {
        mean_t += times[i];
        mean_f += f1s[i];
      }
      mean_t /= double(times.size());
      mean_f /= double(times.size());
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < times.size(); ++i) {
        num += (times[i] - mean_t) * (f1s[i] - mean_f);
        den += (times[i] - mean_t) * (times[i] - mean_t);
      }
      if (den > 0.0) cues.formant_transition_hz_per_s = num / den;
    }
  }
  return cues;
}

RawInput raw_nn_input(const corpus::LandmarkRegion& region, RawInput::Kind kind,
                      const dsp::MelFilterbank& filterbank) {
  const auto window = dsp::hamming_window(region.samples.size());
  Signal tapered(region.samples.size());
  for (std::size_t i = 0; i < tapered.size(); ++i)
    tapered[i] = region.samples[i] * window[i];
  const auto spectrum =
      dsp::magnitude_fft(tapered, filterbank.n_fft, filterbank.sample_rate);

  RawInput input;
  input.kind = kind;
  if (kind == RawInput::Kind::kFft1024) {
    input.values = spectrum.magnitudes;
  } else {
    input.values = filterbank.apply(spectrum);
    for (auto& v : input.values) v = std::log(v + 1e-10);
  }
  return input;
}

namespace {

std::vector<double> mean_of_frames(const std::vector<std::vector<double>>& frames) {
  std::vector<double> mean(frames.front().size(), 0.0);
  for (const auto& f : frames)
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += f[d];
  for (auto& v : mean) v /= double(frames.size());
  return mean;
}

}  // namespace

std::vector<double> mfcc_features(const Signal& audio, double sample_rate,
                                  const corpus::PhoneSegment& segment,
                                  const corpus::LandmarkRegion& region,
                                  MfccVariant variant,
                                  const dsp::MelFilterbank& filterbank,
                                  const dsp::MfccConfig& config) {
  const bool whole = variant == MfccVariant::kMc13Whole || variant == MfccVariant::kMc39Whole;
  const bool dynamics = variant == MfccVariant::kMc39Whole || variant == MfccVariant::kMc39Region;

  Signal span;
  if (whole) {
    const auto lo = std::max<std::int64_t>(0, std::llround(segment.start_s * sample_rate));
    const auto hi = std::min<std::int64_t>(std::int64_t(audio.size()),
                                           std::llround(segment.end_s * sample_rate));
    if (hi > lo)
      span.assign(audio.begin() + std::ptrdiff_t(lo), audio.begin() + std::ptrdiff_t(hi));
  } else {
    span = region.samples;
  }
  const auto frame_len = std::size_t(std::llround(config.frame_len_s * sample_rate));
  if (span.size() < frame_len) span.resize(frame_len, 0.0);

  const auto statics = dsp::mfcc_frames(span, config, filterbank);
  auto out = mean_of_frames(statics);
  if (dynamics) {
    const auto d = dsp::deltas(statics, config.delta_window);
    const auto dd = dsp::deltas(d, config.delta_window);
    const auto d_mean = mean_of_frames(d);
    const auto dd_mean = mean_of_frames(dd);
    out.insert(out.end(), d_mean.begin(), d_mean.end());
    out.insert(out.end(), dd_mean.begin(), dd_mean.end());
  }
  return out;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size())
    throw DataError("standardizer: dimension mismatch (" + std::to_string(x.size()) +
                    " vs " + std::to_string(mean.size()) + ")");
  std::vector<double> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / std_dev[d];
  return out;
}

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw DataError("standardizer: need at least 2 training rows");
  const std::size_t dim = rows.front().size();
  Standardizer s;
  s.mean.assign(dim, 0.0);
  s.std_dev.assign(dim, 0.0);
  for (const auto& row : rows) {
    if (row.size() != dim) throw DataError("standardizer: ragged training matrix");
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += row[d];
  }
  for (auto& v : s.mean) v /= double(rows.size());
  for (const auto& row : rows)
    for (std::size_t d = 0; d < dim; ++d) {
      const double delta = row[d] - s.mean[d];
      s.std_dev[d] += delta * delta;
    }
  constexpr double kStdFloor = 1e-8;
  for (auto& v : s.std_dev) v = std::max(std::sqrt(v / double(rows.size())), kStdFloor);
  return s;
}

std::string write_feature_csv(const FeatureSet& set) {
  std::string out = "# dim=" + std::to_string(set.dim()) + " variant=" + to_string(set.variant) +
                    " corpus=" + set.corpus_id + "\n";
  out += "utterance_id,landmark_time,landmark_type,label";
  for (std::size_t d = 0; d < set.dim(); ++d) out += ",f_" + std::to_string(d);
  out += "\n";
  for (const auto& row : set.rows) {
    if (row.values.size() != set.dim())
      throw DataError("feature csv: row dimension " + std::to_string(row.values.size()) +
                      " does not match declared " + std::to_string(set.dim()));
    out += row.utterance_id + "," + format_double(row.landmark_time_s) + "," +
           corpus::to_string(row.landmark_type) + "," + corpus::to_string(row.label);
    for (const double v : row.values) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

FeatureSet read_feature_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# dim=", 0) != 0)
    throw DataError("feature csv: missing `# dim=...` header line");
  FeatureSet set;
  std::size_t declared_dim = 0;
  {
    std::istringstream fields(line.substr(2));
    std::string token;
    while (fields >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const auto key = token.substr(0, eq);
      const auto value = token.substr(eq + 1);
      if (key == "dim") {
        declared_dim = std::stoul(value);
      } else if (key == "variant") {
        const auto variant = variant_from(value);
        if (!variant) throw DataError("feature csv: unknown variant `" + value + "`");
        set.variant = *variant;
      } else if (key == "corpus") {
        set.corpus_id = value;
      }
    }
  }
  if (declared_dim != set.dim())
    throw DataError("feature csv: declared dim " + std::to_string(declared_dim) +
                    " does not match variant " + to_string(set.variant));
  if (!std::getline(in, line) || line.rfind("utterance_id,", 0) != 0)
    throw DataError("feature csv: missing column header row");

  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    FeatureRow row;
    std::istringstream fields(line);
    std::string cell;
    auto next = [&](const char* what) {
      if (!std::getline(fields, cell, ','))
        throw DataError("feature csv line " + std::to_string(line_no) + ": missing " + what);
      return cell;
    };
    row.utterance_id = next("utterance_id");
    row.landmark_time_s = std::stod(next("landmark_time"));
    const auto kind = corpus::landmark_type_from(next("landmark_type"));
    if (!kind)
      throw DataError("feature csv line " + std::to_string(line_no) + ": bad landmark type");
    row.landmark_type = *kind;
    const auto label = next("label");
    if (label == "voiced")
      row.label = corpus::Voicing::kVoiced;
    else if (label == "unvoiced")
      row.label = corpus::Voicing::kUnvoiced;
    else
      throw DataError("feature csv line " + std::to_string(line_no) + ": bad label `" + label +
                      "`");
    row.values.reserve(set.dim());
    while (std::getline(fields, cell, ',')) row.values.push_back(std::stod(cell));
    if (row.values.size() != set.dim())
      throw DataError("feature csv line " + std::to_string(line_no) + ": expected " +
                      std::to_string(set.dim()) + " values, got " +
                      std::to_string(row.values.size()));
    set.rows.push_back(std::move(row));
  }
  return set;
}

FeatureExtractor::FeatureExtractor(double sample_rate, corpus::PhoneClassMap map)
    : sample_rate_(sample_rate),
      map_(std::move(map)),
      filterbank_(dsp::mel_filterbank(40, 1024, sample_rate, 0.0, sample_rate / 2.0)),
      cues_(sample_rate) {}

namespace {

// The duration-bearing segment for the VOT cue: stop-closure regions use the
// matching release segment when the next segment is one.
const corpus::PhoneSegment& vot_segment(const corpus::LandmarkRegion& region,
                                        const std::vector<corpus::PhoneSegment>& segments,
                                        const corpus::PhoneClassMap& map) {
  const auto index = region.landmark.segment_index;
  const auto& own = segments[index];
  if (region.landmark.kind == corpus::LandmarkType::kSc && index + 1 < segments.size()) {
    const auto& next = segments[index + 1];
    const auto* cls = map.find(next.label);
    if (cls && cls->manner == corpus::Manner::kStopRelease) return next;
  }
  return own;
}

const corpus::PhoneSegment* adjacent_vowel(const corpus::LandmarkRegion& region,
                                           const std::vector<corpus::PhoneSegment>& segments,
                                           const corpus::PhoneClassMap& map) {
  const auto index = region.landmark.segment_index;
  const bool release = corpus::is_release(region.landmark.kind);
  // Releases transition into the following vowel, closures out of the
  // preceding one.
  if (release) {
    if (index + 1 >= segments.size()) return nullptr;
    const auto* cls = map.find(segments[index + 1].label);
    return (cls && cls->manner == corpus::Manner::kVowel) ? &segments[index + 1] : nullptr;
  }
  if (index == 0) return nullptr;
  const auto* cls = map.find(segments[index - 1].label);
  return (cls && cls->manner == corpus::Manner::kVowel) ? &segments[index - 1] : nullptr;
}

}  // namespace

std::vector<double> FeatureExtractor::extract(
    FeatureVariant variant, const Signal& audio,
    const std::vector<corpus::PhoneSegment>& segments,
    const corpus::LandmarkRegion& region) const {
  switch (variant) {
    case FeatureVariant::kCues: {
      const auto& seg = vot_segment(region, segments, map_);
      const auto* vowel = adjacent_vowel(region, segments, map_);
      const auto cues = cues_.manual_cues(region, seg, vowel, audio);
      const auto arr = cues.as_array();
      return std::vector<double>(arr.begin(), arr.end());
    }
    case FeatureVariant::kMc13Whole:
      return mfcc_features(audio, sample_rate_, segments[region.landmark.segment_index],
                           region, MfccVariant::kMc13Whole, filterbank_);
    case FeatureVariant::kMc13Region:
      return mfcc_features(audio, sample_rate_, segments[region.landmark.segment_index],
                           region, MfccVariant::kMc13Region, filterbank_);
    case FeatureVariant::kMc39Whole:
      return mfcc_features(audio, sample_rate_, segments[region.landmark.segment_index],
                           region, MfccVariant::kMc39Whole, filterbank_);
    case FeatureVariant::kMc39Region:
      return mfcc_features(audio, sample_rate_, segments[region.landmark.segment_index],
                           region, MfccVariant::kMc39Region, filterbank_);
    case FeatureVariant::kFft1024:
      return raw_nn_input(region, RawInput::Kind::kFft1024, filterbank_).values;
    case FeatureVariant::kFb40:
      return raw_nn_input(region, RawInput::Kind::kFb40, filterbank_).values;
  }
  throw UsageError("unknown feature variant");
}

FeatureSet FeatureExtractor::extract_all(
    FeatureVariant variant, const Signal& audio,
    const std::vector<corpus::PhoneSegment>& segments,
    const std::vector<corpus::LandmarkRegion>& regions) const {
  FeatureSet set;
  set.variant = variant;
  for (const auto& region : regions) {
    FeatureRow row;
    row.utterance_id = segments[region.landmark.segment_index].utterance_id;
    row.landmark_time_s = region.landmark.time_s;
    row.landmark_type = region.landmark.kind;
    row.label = region.label;
    row.values = extract(variant, audio, segments, region);
    set.rows.push_back(std::move(row));
  }
  return set;
}

}  // namespace voicing::features
