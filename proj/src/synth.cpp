#include "voicing/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "voicing/dsp.hpp"
#include "voicing/wav.hpp"

namespace voicing::corpus {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFs = kTargetSampleRate;
constexpr double kDevoicedFraction = 0.16;

void add_pulse_train(Signal& out, std::size_t start, std::size_t len, double f0,
                     double amp, double band_limit_hz) {
  const int harmonics = std::max(1, int(band_limit_hz / f0));
  for (int h = 1; h <= harmonics; ++h) {
    const double w = 2.0 * kPi * f0 * double(h) / kFs;
    const double a = amp / double(h);
    for (std::size_t i = 0; i < len; ++i) out[start + i] += a * std::sin(w * double(i));
  }
}

// 5 ms raised-cosine fades avoid clicks at span boundaries.
void fade_edges(Signal& out, std::size_t start, std::size_t len) {
  const std::size_t ramp = std::min<std::size_t>(80, len / 4);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(kPi * double(i) / double(ramp));
    out[start + i] *= g;
    out[start + len - 1 - i] *= g;
  }
}

struct Resonator {
  double r, c;
  double y1 = 0.0, y2 = 0.0;
  Resonator(double freq, double bw)
      : r(std::exp(-kPi * bw / kFs)), c(std::cos(2.0 * kPi * freq / kFs)) {}
  void retune(double freq) { c = std::cos(2.0 * kPi * freq / kFs); }
  double step(double x) {
    const double y = (1.0 - r * r) * x + 2.0 * r * c * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

class Generator {
 public:
  explicit Generator(const SynthSpec& spec) : spec_(spec), rng_(spec.seed) {}

  SynthCorpus run() {
    SynthCorpus corpus;
    corpus.spec = spec_;
    const std::size_t total = spec_.n_utterances * spec_.tokens_per_utterance;

    // Exact voiced count; the shuffle decides placement.
    const auto n_voiced = std::size_t(std::llround(spec_.class_ratio * double(total)));
    std::vector<Voicing> labels(total, Voicing::kUnvoiced);
    std::fill(labels.begin(), labels.begin() + std::ptrdiff_t(n_voiced), Voicing::kVoiced);
    std::shuffle(labels.begin(), labels.end(), rng_);
    std::vector<bool> is_stop(total);
    for (std::size_t i = 0; i < total; ++i) is_stop[i] = (rng_() & 1) != 0;

    std::size_t token_index = 0;
    for (std::size_t u = 0; u < spec_.n_utterances; ++u) {
      SynthUtterance utt;
      char id[32];
      std::snprintf(id, sizeof(id), "utt%04zu", u);
      utt.id = id;
      Builder b{utt, *this};
      b.silence(uniform_int(1600, 2000));
      for (std::size_t t = 0; t < spec_.tokens_per_utterance; ++t, ++token_index) {
        SynthToken token;
        token.utterance_index = u;
        token.label = labels[token_index];
        token.f0_hz = uniform(spec_.f0_lo_hz, spec_.f0_hi_hz);
        token.partially_devoiced =
            token.label == Voicing::kVoiced && uniform(0.0, 1.0) < kDevoicedFraction;
        if (is_stop[token_index])
          emit_stop(b, token);
        else
          emit_fricative(b, token);
        emit_vowel(b, token.f0_hz);
        token.vowel_segment = utt.segments.size() - 1;
        b.silence(uniform_int(800, 1280));
        corpus.tokens.push_back(std::move(token));
      }
      // Session-to-session channel variety around the regime's base channel.
      const double tilt =
          std::clamp(spec_.channel_tilt + uniform(-0.35, 0.35), -0.9, 0.9);
      const double gain_db = spec_.channel_gain_db + uniform(-8.0, 0.0);
      apply_channel(utt.samples, tilt, gain_db);
      corpus.utterances.push_back(std::move(utt));
    }
    return corpus;
  }

 private:
  struct Builder {
    SynthUtterance& utt;
    Generator& gen;

    std::size_t pos() const { return utt.samples.size(); }
    void grow(std::size_t n) { utt.samples.resize(utt.samples.size() + n, 0.0); }
    void silence(std::size_t n) { grow(n); }
    void segment(const std::string& phone, std::size_t start, std::size_t end) {
      utt.segments.push_back(
          {phone, double(start) / kFs, double(end) / kFs, utt.id});
    }
  };

  // First-order channel model for cross-regime recording differences.
  static void apply_channel(Signal& samples, double tilt, double gain_db) {
    if (tilt > 0.0) {
      double prev = 0.0;
      for (auto& v : samples) {
        const double cur = v;
        v = cur - tilt * prev;
        prev = cur;
      }
    } else if (tilt < 0.0) {
      double state = 0.0;
      const double a = -tilt;
      for (auto& v : samples) {
        state = (1.0 - a) * v + a * state;
        v = state;
      }
    }
    if (gain_db != 0.0) {
      const double gain = std::pow(10.0, gain_db / 20.0);
      for (auto& v : samples) v *= gain;
    }
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  std::size_t uniform_int(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  // Per-token spectral concentration, the way fricative places of
  // articulation differ; the configured band is the family center. Two
  // sub-bands give double-peaked spectra.
  std::vector<dsp::IirFilter> draw_band_filters() {
    double lo = spec_.noise_band_lo_hz * uniform(0.8, 1.25);
    double hi = spec_.noise_band_hi_hz * uniform(0.85, 1.1);
    lo = std::clamp(lo, 1000.0, 6000.0);
    hi = std::clamp(hi, lo + 1200.0, 7600.0);
    auto design = [&](double band_lo, double band_hi) {
      return dsp::butterworth_bandpass(
          {.pass_lo = band_lo,
           .pass_hi = band_hi,
           .stop_lo = 0.75 * band_lo,
           .stop_hi = std::min(1.25 * band_hi, 0.5 * (band_hi + kFs / 2.0))},
          kFs);
    };
    if (spec_.noise_subbands < 2) return {design(lo, hi)};
    const double width = hi - lo;
    return {design(lo, lo + 0.35 * width), design(hi - 0.3 * width, hi)};
  }

  Signal shaped_noise(std::size_t n, double target_rms,
                      const std::vector<dsp::IirFilter>& filters) {
    // Extra head samples absorb the filter transient.
    const std::size_t head = 512;
    Signal out(n, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& filter : filters) {
      Signal white(n + head);
      for (auto& v : white) v = gauss(rng_);
      auto shaped = filter.apply(white);
      for (std::size_t i = 0; i < n; ++i) out[i] += shaped[head + i];
    }
    const double scale = target_rms / std::max(dsp::rms(out), 1e-12);
    for (auto& v : out) v *= scale;
    return out;
  }

  void add_noise(Signal& samples, std::size_t start, const Signal& noise) {
    for (std::size_t i = 0; i < noise.size(); ++i) samples[start + i] += noise[i];
  }

  // Voiced: pulse train + band noise at snr_db; unvoiced: band noise only.
  // Partially devoiced tokens keep the pulse train only over the first 40 %.
  void emit_fricative(Builder& b, SynthToken& token) {
    const bool voiced = token.label == Voicing::kVoiced;
    token.consonant = voiced ? "z" : "s";
    // Partially devoiced fricatives run long, like their unvoiced neighbours.
    const std::size_t len = !voiced              ? uniform_int(1600, 2240)
                            : token.partially_devoiced ? uniform_int(1440, 1920)
                                                       : uniform_int(960, 1440);
    token.vot_s = double(len) / kFs;
    const std::size_t start = b.pos();
    b.grow(len);
    const double signal_amp = 0.25;
    const auto band = draw_band_filters();
    if (voiced) {
      const std::size_t voiced_len =
          token.partially_devoiced ? std::size_t(0.4 * double(len)) : len;
      add_pulse_train(b.utt.samples, start, voiced_len, token.f0_hz, signal_amp, 4000.0);
      fade_edges(b.utt.samples, start, voiced_len);
      const double signal_rms = dsp::rms(
          std::span<const double>(b.utt.samples).subspan(start, voiced_len));
      const double noise_rms = signal_rms * std::pow(10.0, -spec_.snr_db / 20.0);
      add_noise(b.utt.samples, start, shaped_noise(len, noise_rms, band));
    } else {
      add_noise(b.utt.samples, start, shaped_noise(len, 0.12, band));
    }
    fade_edges(b.utt.samples, start, len);
    b.segment(token.consonant, start, b.pos());
    token.consonant_segment = b.utt.segments.size() - 1;
  }

  // Closure (>= 40 ms; voice bar when voiced) then burst + aspiration whose
  // length is the VOT: short when voiced, long when unvoiced.
  void emit_stop(Builder& b, SynthToken& token) {
    const bool voiced = token.label == Voicing::kVoiced;
    token.consonant = voiced ? "d" : "t";
    const std::string closure = voiced ? "dcl" : "tcl";

    const auto band = draw_band_filters();
    const std::size_t closure_len = uniform_int(640, 960);
    const std::size_t closure_start = b.pos();
    b.grow(closure_len);
    if (voiced && !token.partially_devoiced) {
      // Voice bar: fundamental plus one harmonic, low level.
      add_pulse_train(b.utt.samples, closure_start, closure_len, token.f0_hz, 0.12,
                      2.5 * token.f0_hz);
      const double noise_rms = 0.12 * std::pow(10.0, -spec_.snr_db / 20.0);
      add_noise(b.utt.samples, closure_start, shaped_noise(closure_len, noise_rms, band));
      fade_edges(b.utt.samples, closure_start, closure_len);
    }
    b.segment(closure, closure_start, b.pos());
    token.closure_segment = b.utt.segments.size() - 1;

    const std::size_t release_len = !voiced              ? uniform_int(800, 1280)
                                    : token.partially_devoiced ? uniform_int(640, 1024)
                                                               : uniform_int(240, 400);
    token.vot_s = double(release_len) / kFs;
    const std::size_t release_start = b.pos();
    b.grow(release_len);
    const std::size_t burst_len = std::min<std::size_t>(uniform_int(160, 320), release_len);
    {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (std::size_t i = 0; i < burst_len; ++i)
        b.utt.samples[release_start + i] += 0.3 * gauss(rng_) *
                                            (1.0 - double(i) / double(burst_len));
    }
    if (release_len > burst_len)
      add_noise(b.utt.samples, release_start + burst_len,
                shaped_noise(release_len - burst_len, 0.08, band));
    if (voiced && !token.partially_devoiced)
      add_pulse_train(b.utt.samples, release_start, release_len, token.f0_hz, 0.08,
                      2.5 * token.f0_hz);
    fade_edges(b.utt.samples, release_start, release_len);
    b.segment(token.consonant, release_start, b.pos());
    token.consonant_segment = b.utt.segments.size() - 1;
  }

  // Two-resonator vowel; F1 glides up over the first 40 ms so a formant
  // transition into the vowel exists.
  void emit_vowel(Builder& b, double f0) {
    const std::size_t len = uniform_int(1920, 2560);
    const double f1 = uniform(650.0, 780.0);
    const double f2 = uniform(1120.0, 1320.0);
    const std::size_t start = b.pos();
    b.grow(len);

    Signal excitation(len, 0.0);
    const int harmonics = std::max(1, int(4500.0 / f0));
    for (int h = 1; h <= harmonics; ++h) {
      const double w = 2.0 * kPi * f0 * double(h) / kFs;
      for (std::size_t i = 0; i < len; ++i)
        excitation[i] += 0.6 / std::sqrt(double(h)) * std::sin(w * double(i));
    }
    Resonator r1(f1, 90.0), r2(f2, 110.0);
    const std::size_t glide = std::min<std::size_t>(640, len);
    for (std::size_t i = 0; i < len; ++i) {
      if (i < glide)
        r1.retune(450.0 + (f1 - 450.0) * double(i) / double(glide));
      else
        r1.retune(f1);
      b.utt.samples[start + i] = r2.step(r1.step(excitation[i]));
    }
    auto span = std::span<const double>(b.utt.samples).subspan(start, len);
    const double scale = 0.22 / std::max(dsp::rms(span), 1e-12);
    for (std::size_t i = 0; i < len; ++i) b.utt.samples[start + i] *= scale;
    fade_edges(b.utt.samples, start, len);
    b.segment("aa", start, b.pos());
  }

  SynthSpec spec_;
  std::mt19937_64 rng_;
};

}  // namespace

void SynthSpec::validate() const {
  if (n_utterances < 1 || tokens_per_utterance < 1)
    throw DataError("synth spec: counts must be >= 1");
  if (!(f0_lo_hz >= 50.0 && f0_hi_hz <= 400.0 && f0_lo_hz < f0_hi_hz))
    throw DataError("synth spec: F0 range must lie within [50, 400] Hz");
  if (!(class_ratio > 0.0 && class_ratio < 1.0))
    throw DataError("synth spec: class_ratio must be in (0, 1)");
  if (!(channel_tilt > -1.0 && channel_tilt < 1.0))
    throw DataError("synth spec: channel_tilt must lie in (-1, 1)");
  if (!(channel_gain_db <= 0.0 && channel_gain_db > -40.0))
    throw DataError("synth spec: channel_gain_db must lie in (-40, 0] to avoid clipping");
  if (!(noise_band_lo_hz >= 1000.0 && noise_band_lo_hz < noise_band_hi_hz &&
        noise_band_hi_hz <= 7600.0))
    throw DataError("synth spec: noise band must satisfy 1000 <= lo < hi <= 7600 Hz");
  if (noise_subbands < 1 || noise_subbands > 2)
    throw DataError("synth spec: noise_subbands must be 1 or 2");
}

SynthCorpus synthesize_corpus(const SynthSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "wav");
  fs::create_directories(dir / "phn");
  for (const auto& utt : corpus.utterances) {
    wav::write_wav(dir / "wav" / (utt.id + ".wav"), utt.samples, kFs);
    std::ofstream phn(dir / "phn" / (utt.id + ".phn"));
    if (!phn) throw DataError("synth: cannot write alignments under " + dir.string());
    for (const auto& seg : utt.segments)
      phn << std::llround(seg.start_s * kFs) << " " << std::llround(seg.end_s * kFs) << " "
          << seg.label << "\n";
  }
  std::ofstream truth(dir / "truth.csv");
  if (!truth) throw DataError("synth: cannot write truth.csv under " + dir.string());
  truth << "utterance_id,token_index,consonant,label,f0_hz,vot_s\n";
  std::size_t index = 0;
  std::size_t prev_utt = std::size_t(-1);
  for (const auto& token : corpus.tokens) {
    if (token.utterance_index != prev_utt) {
      index = 0;
      prev_utt = token.utterance_index;
    }
    truth << corpus.utterances[token.utterance_index].id << "," << index++ << ","
          << token.consonant << "," << to_string(token.label) << ","
          << format_double(token.f0_hz) << "," << format_double(token.vot_s) << "\n";
  }
}

}  // namespace voicing::corpus
