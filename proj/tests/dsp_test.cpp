#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "voicing/dsp.hpp"

using namespace voicing;
using namespace voicing::dsp;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_frame(std::size_t n, unsigned seed, double amp = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Brute-force O(n^2) DFT magnitude, the oracle for the fast path.
std::vector<double> naive_dft_magnitude(const std::vector<double>& x, std::size_t n_fft) {
  std::vector<double> mags(n_fft / 2 + 1, 0.0);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double ang = -2.0 * kPi * double(k) * double(n) / double(n_fft);
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mags[k] = std::abs(acc);
  }
  return mags;
}

std::vector<double> tone(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = amp * std::cos(2.0 * kPi * freq * double(i) / fs);
  return out;
}

// Band-limited pulse train: harmonics of f0 up to band_limit_hz with 1/h rolloff.
std::vector<double> pulse_train(double f0, double fs, std::size_t n,
                                double band_limit_hz = 4000.0, double amp = 0.5) {
  std::vector<double> out(n, 0.0);
  const int harmonics = int(band_limit_hz / f0);
  for (int h = 1; h <= harmonics; ++h)
    for (std::size_t i = 0; i < n; ++i)
      out[i] += amp / double(h) * std::sin(2.0 * kPi * f0 * double(h) * double(i) / fs);
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("dsp");

TEST_CASE("hamming window closed form and symmetry") {
  auto w3 = hamming_window(3);
  CHECK(w3[0] == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(w3[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w3[2] == doctest::Approx(0.08).epsilon(1e-12));

  auto w = hamming_window(33);
  for (std::size_t k = 0; k < w.size(); ++k)
    CHECK(w[k] == doctest::Approx(w[w.size() - 1 - k]).epsilon(1e-14));

  CHECK(hamming_window(1) == std::vector<double>{1.0});
  CHECK_THROWS_AS(hamming_window(0), DataError);
}

TEST_CASE("magnitude FFT: pure tone at an exact bin") {
  const double fs = 16000.0;
  const std::size_t n = 1024;
  const double f = 32.0 * fs / double(n);
  auto x = tone(f, fs, n);
  auto s = magnitude_fft(x, n, fs);
  auto peak = std::max_element(s.magnitudes.begin(), s.magnitudes.end());
  CHECK(std::size_t(peak - s.magnitudes.begin()) == 32);
  CHECK(*peak == doctest::Approx(512.0).epsilon(1e-9));
}

TEST_CASE("magnitude FFT: zero frame and length guard") {
  std::vector<double> zeros(320, 0.0);
  auto s = magnitude_fft(zeros, 1024, 16000.0);
  for (double m : s.magnitudes) CHECK(m == 0.0);
  std::vector<double> too_long(2000, 0.0);
  CHECK_THROWS_AS(magnitude_fft(too_long, 1024, 16000.0), DataError);
}

TEST_CASE("magnitude FFT matches brute-force DFT on random frames") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    auto x = random_frame(320, 100 + seed);
    auto fast = magnitude_fft(x, 1024, 16000.0);
    auto slow = naive_dft_magnitude(x, 1024);
    double max_mag = *std::max_element(slow.begin(), slow.end());
    for (std::size_t k = 0; k < slow.size(); ++k)
      CHECK(std::abs(fast.magnitudes[k] - slow[k]) <= 1e-9 * max_mag);
  }
}

TEST_CASE("FFT satisfies Parseval's identity") {
  auto x = random_frame(1024, 7);
  std::vector<std::complex<double>> buf(x.begin(), x.end());
  fft_inplace(buf);
  double time_energy = 0.0;
  for (double v : x) time_energy += v * v;
  double freq_energy = 0.0;
  for (const auto& c : buf) freq_energy += std::norm(c);
  freq_energy /= double(buf.size());
  CHECK(freq_energy == doctest::Approx(time_energy).epsilon(1e-6));
}

TEST_CASE("mel filterbank construction") {
  CHECK(mel_from_hz(0.0) == 0.0);
  auto fb = mel_filterbank(40, 1024, 16000.0, 0.0, 8000.0);

  SUBCASE("edges strictly increasing and shared between neighbours") {
    for (std::size_t m = 0; m < fb.n_filters; ++m) {
      CHECK(fb.edges[m].lo_hz < fb.edges[m].center_hz);
      CHECK(fb.edges[m].center_hz < fb.edges[m].hi_hz);
      if (m + 1 < fb.n_filters) {
        CHECK(fb.edges[m].center_hz == doctest::Approx(fb.edges[m + 1].lo_hz).epsilon(1e-12));
        CHECK(fb.edges[m].hi_hz == doctest::Approx(fb.edges[m + 1].center_hz).epsilon(1e-12));
      }
    }
  }

  SUBCASE("rows are triangular with weights in [0,1] and positive sum") {
    const std::size_t bins = fb.n_fft / 2 + 1;
    for (std::size_t m = 0; m < fb.n_filters; ++m) {
      double sum = 0.0;
      bool falling = false;
      double prev = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = fb.weight(m, k);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        sum += w;
        if (w < prev - 1e-12) falling = true;
        if (falling && w > prev + 1e-12 && w > 0.0) FAIL("filter rises after falling");
        prev = w;
      }
      CHECK(sum > 0.0);
    }
  }

  SUBCASE("edges match an independent mel-scale computation") {
    // Independent recomputation of the mel grid for filter 1.
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double step = (mel(8000.0) - mel(0.0)) / 41.0;
    CHECK(fb.edges[0].lo_hz == doctest::Approx(hz(0.0)).epsilon(1e-9));
    CHECK(fb.edges[0].center_hz == doctest::Approx(hz(step)).epsilon(1e-9));
    CHECK(fb.edges[0].hi_hz == doctest::Approx(hz(2.0 * step)).epsilon(1e-9));
    // Weight at the bin nearest the center of filter 1 agrees with the
    // triangle evaluated directly.
    const double bin_hz = 16000.0 / 1024.0;
    const auto k = std::size_t(std::llround(fb.edges[0].center_hz / bin_hz));
    const double f = double(k) * bin_hz;
    const double expect = f <= fb.edges[0].center_hz
                              ? (f - fb.edges[0].lo_hz) / (fb.edges[0].center_hz - fb.edges[0].lo_hz)
                              : (fb.edges[0].hi_hz - f) / (fb.edges[0].hi_hz - fb.edges[0].center_hz);
    CHECK(fb.weight(0, k) == doctest::Approx(expect).epsilon(1e-9));
  }

  SUBCASE("too many filters for the FFT resolution") {
    CHECK_THROWS_AS(mel_filterbank(40, 64, 16000.0, 0.0, 8000.0), DataError);
  }
}

TEST_CASE("MFCC frame properties") {
  const auto fb = mel_filterbank(40, 1024, 16000.0, 0.0, 8000.0);
  MfccConfig cfg;

  SUBCASE("constant signal gives identical frames") {
    std::vector<double> x(800, 0.25);
    auto frames = mfcc_frames(x, cfg, fb);
    REQUIRE(frames.size() == 9);
    for (const auto& f : frames) {
      REQUIRE(f.size() == 13);
      for (std::size_t d = 0; d < 13; ++d)
        CHECK(f[d] == doctest::Approx(frames[0][d]).epsilon(1e-12));
    }
  }

  SUBCASE("scaling the waveform shifts only coefficient 0") {
    auto x = tone(1000.0, 16000.0, 640, 0.4);
    auto base = mfcc_frames(x, cfg, fb);
    for (auto& v : x) v *= 10.0;
    auto scaled = mfcc_frames(x, cfg, fb);
    for (std::size_t t = 0; t < base.size(); ++t) {
      const double c0_shift = scaled[t][0] - base[t][0];
      CHECK(c0_shift == doctest::Approx(std::log(10.0) * std::sqrt(40.0)).epsilon(1e-6));
      for (std::size_t d = 1; d < 13; ++d)
        CHECK(scaled[t][d] == doctest::Approx(base[t][d]).epsilon(1e-9));
    }
  }

  SUBCASE("pure tone matches a scratch reimplementation") {
    auto x = tone(1000.0, 16000.0, 320, 0.7);
    auto frames = mfcc_frames(x, cfg, fb);
    REQUIRE(frames.size() == 3);

    // Independent pipeline: direct pre-emphasis, window, naive DFT,
    // triangles recomputed from the mel grid, natural log, direct DCT-II.
    std::vector<double> emph(x.size());
    emph[0] = x[0] * (1.0 - 0.97);
    for (std::size_t i = 1; i < x.size(); ++i) emph[i] = x[i] - 0.97 * x[i - 1];
    std::vector<double> frame0(emph.begin(), emph.begin() + 160);
    for (std::size_t i = 0; i < 160; ++i)
      frame0[i] *= 0.54 - 0.46 * std::cos(2.0 * kPi * double(i) / 159.0);
    auto mags = naive_dft_magnitude(frame0, 1024);
    auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double step = mel(8000.0) / 41.0;
    std::vector<double> logE(40);
    for (int m = 1; m <= 40; ++m) {
      const double lo = hz(step * (m - 1)), c = hz(step * m), hi = hz(step * (m + 1));
      double acc = 0.0;
      for (std::size_t k = 0; k < mags.size(); ++k) {
        const double f = double(k) * 16000.0 / 1024.0;
        double w = 0.0;
        if (f >= lo && f <= c)
          w = (f - lo) / (c - lo);
        else if (f > c && f <= hi)
          w = (hi - f) / (hi - c);
        acc += w * mags[k];
      }
      logE[std::size_t(m - 1)] = std::log(std::max(acc, 1e-10));
    }
    for (int j = 0; j < 13; ++j) {
      double acc = 0.0;
      for (int m = 0; m < 40; ++m)
        acc += logE[std::size_t(m)] * std::cos(kPi * j * (2.0 * m + 1.0) / 80.0);
      acc *= (j == 0) ? std::sqrt(1.0 / 40.0) : std::sqrt(2.0 / 40.0);
      CHECK(frames[0][std::size_t(j)] == doctest::Approx(acc).epsilon(1e-6));
    }
  }

  SUBCASE("signal shorter than one frame is rejected") {
    std::vector<double> x(80, 0.1);
    CHECK_THROWS_AS(mfcc_frames(x, cfg, fb), DataError);
  }
}

TEST_CASE("delta coefficients") {
  SUBCASE("constant sequence gives zero deltas") {
    std::vector<std::vector<double>> c(6, std::vector<double>{3.0, -1.0});
    for (const auto& d : deltas(c, 2))
      for (double v : d) CHECK(v == doctest::Approx(0.0));
  }

  SUBCASE("linear ramp gives the slope in the interior") {
    std::vector<std::vector<double>> c;
    for (int t = 0; t < 10; ++t) c.push_back({0.5 * t});
    auto d = deltas(c, 2);
    for (std::size_t t = 2; t + 2 < c.size(); ++t)
      CHECK(d[t][0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("random length-5 sequence matches the direct formula") {
    auto vals = random_frame(5, 42);
    std::vector<std::vector<double>> c;
    for (double v : vals) c.push_back({v});
    auto d = deltas(c, 2);
    auto at = [&](int t) { return vals[std::size_t(std::clamp(t, 0, 4))]; };
    for (int t = 0; t < 5; ++t) {
      const double expect =
          (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / (2.0 * (1.0 + 4.0));
      CHECK(d[std::size_t(t)][0] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("reversed sequence gives negated reversed deltas in the interior") {
    auto vals = random_frame(9, 43);
    std::vector<std::vector<double>> c, r;
    for (double v : vals) c.push_back({v});
    for (auto it = vals.rbegin(); it != vals.rend(); ++it) r.push_back({*it});
    auto d = deltas(c, 2);
    auto dr = deltas(r, 2);
    for (std::size_t t = 2; t + 2 < c.size(); ++t)
      CHECK(dr[c.size() - 1 - t][0] == doctest::Approx(-d[t][0]).epsilon(1e-12));
  }
}

TEST_CASE("Butterworth designs meet the ripple and attenuation spec") {
  const double fs = 16000.0;

  SUBCASE("E1 lowpass limb 0-400 Hz") {
    BandpassSpec spec{.pass_lo = 0.0, .pass_hi = 400.0, .stop_lo = 0.0, .stop_hi = 500.0};
    auto filt = butterworth_bandpass(spec, fs);
    CHECK(filt.response_db(400.0, fs) >= -3.0);
    CHECK(filt.response_db(400.0, fs) <= 0.01);
    CHECK(filt.response_db(0.0, fs) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(filt.response_db(500.0, fs) <= -40.0);
  }

  SUBCASE("E2 bandpass 2000-7000 Hz") {
    BandpassSpec spec{.pass_lo = 2000.0, .pass_hi = 7000.0, .stop_lo = 1500.0, .stop_hi = 7500.0};
    auto filt = butterworth_bandpass(spec, fs);
    CHECK(filt.response_db(2000.0, fs) >= -3.0);
    CHECK(filt.response_db(7000.0, fs) >= -3.0);
    for (double f : {2500.0, 4000.0, 5500.0, 6500.0}) {
      CHECK(filt.response_db(f, fs) <= 0.01);
      CHECK(filt.response_db(f, fs) >= -3.0);
    }
    CHECK(filt.response_db(1500.0, fs) <= -40.0);
    CHECK(filt.response_db(7500.0, fs) <= -40.0);
  }

  SUBCASE("DC blocked by the bandpass") {
    BandpassSpec spec{.pass_lo = 2000.0, .pass_hi = 7000.0, .stop_lo = 1500.0, .stop_hi = 7500.0};
    auto filt = butterworth_bandpass(spec, fs);
    // The step onset itself carries broadband energy, so judge the filter on
    // its settled response.
    std::vector<double> dc(16000, 1.0);
    auto y = filt.apply(dc);
    double in_e = 0.0, out_e = 0.0;
    for (std::size_t i = 4000; i < dc.size(); ++i) {
      in_e += dc[i] * dc[i];
      out_e += y[i] * y[i];
    }
    CHECK(out_e / in_e < 1e-6);
  }

  SUBCASE("white-noise band energy matches an FFT-masking oracle") {
    BandpassSpec spec{.pass_lo = 2000.0, .pass_hi = 7000.0, .stop_lo = 1500.0, .stop_hi = 7500.0};
    auto filt = butterworth_bandpass(spec, fs);
    const std::size_t n = 65536;
    auto x = random_frame(n, 2024);
    auto y = filt.apply(x);
    double out_e = 0.0;
    for (double v : y) out_e += v * v;

    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft_inplace(buf);
    double masked = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double f = double(k <= n / 2 ? k : n - k) * fs / double(n);
      if (f >= 2000.0 && f <= 7000.0) masked += std::norm(buf[k]);
    }
    masked /= double(n);
    CHECK(out_e == doctest::Approx(masked).epsilon(0.10));
  }

  SUBCASE("infeasible specs are rejected") {
    CHECK_THROWS_AS(
        butterworth_bandpass({.pass_lo = 0.0, .pass_hi = 400.0, .stop_lo = 0.0, .stop_hi = 402.0}, fs),
        DataError);
    CHECK_THROWS_AS(
        butterworth_bandpass({.pass_lo = 0.0, .pass_hi = 400.0, .stop_lo = 0.0, .stop_hi = 9000.0}, fs),
        DataError);
  }
}

TEST_CASE("band energy and rms") {
  const double fs = 16000.0;
  BandpassSpec e1{.pass_lo = 0.0, .pass_hi = 400.0, .stop_lo = 0.0, .stop_hi = 500.0};
  BandpassSpec e2{.pass_lo = 2000.0, .pass_hi = 7000.0, .stop_lo = 1500.0, .stop_hi = 7500.0};
  auto f1 = butterworth_bandpass(e1, fs);
  auto f2 = butterworth_bandpass(e2, fs);

  SUBCASE("rms of a constant") {
    std::vector<double> c(100, -0.3);
    CHECK(rms(c) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(rms(std::vector<double>{}), DataError);
  }

  SUBCASE("100 Hz tone concentrates in E1") {
    auto x = tone(100.0, fs, 16000);
    const double elo = band_energy(f1, x, 2000);
    const double ehi = band_energy(f2, x, 2000);
    CHECK(elo / (ehi + 1e-300) > 100.0);
  }

  SUBCASE("4 kHz tone concentrates in E2") {
    auto x = tone(4000.0, fs, 16000);
    const double elo = band_energy(f1, x, 2000);
    const double ehi = band_energy(f2, x, 2000);
    CHECK(ehi / (elo + 1e-300) > 100.0);
  }
}

TEST_CASE("NCCF") {
  SUBCASE("periodic signal gives unity at the period") {
    const double fs = 16000.0;
    const double f0 = 125.0;  // period exactly 128 samples
    auto x = pulse_train(f0, fs, 1024);
    auto phi = nccf(x, 40, 320, 160);
    CHECK(phi[128 - 40] == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : phi) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }

  SUBCASE("white noise stays small") {
    for (unsigned seed = 1; seed <= 8; ++seed) {
      auto x = random_frame(600, 5000 + seed);
      auto phi = nccf(x, 40, 320, 200);
      const double peak = *std::max_element(phi.begin(), phi.end());
      CHECK(peak < 0.3);
    }
  }

  SUBCASE("all-zero frame gives all zeros") {
    std::vector<double> x(600, 0.0);
    for (double v : nccf(x, 40, 320, 160)) CHECK(v == 0.0);
  }

  SUBCASE("invariant to amplitude scaling") {
    auto x = random_frame(600, 99);
    auto phi1 = nccf(x, 40, 320, 160);
    for (auto& v : x) v *= 7.5;
    auto phi2 = nccf(x, 40, 320, 160);
    for (std::size_t i = 0; i < phi1.size(); ++i)
      CHECK(phi2[i] == doctest::Approx(phi1[i]).epsilon(1e-12));
  }

  SUBCASE("frame too short is rejected") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS_AS(nccf(x, 40, 320, 160), DataError);
  }
}

TEST_CASE("pitch tracker") {
  const double fs = 16000.0;

  SUBCASE("recovers a 120 Hz pulse train") {
    auto x = pulse_train(120.0, fs, 8000);
    auto track = track_pitch(x, fs);
    REQUIRE(track.frames.size() > 10);
    std::vector<double> voiced_f0;
    std::size_t interior_voiced = 0, interior = 0;
    for (std::size_t t = 2; t + 4 < track.frames.size(); ++t) {
      ++interior;
      if (track.frames[t].voiced) {
        ++interior_voiced;
        voiced_f0.push_back(track.frames[t].f0_hz);
      }
    }
    CHECK(interior_voiced == interior);
    REQUIRE(!voiced_f0.empty());
    std::sort(voiced_f0.begin(), voiced_f0.end());
    const double median = voiced_f0[voiced_f0.size() / 2];
    CHECK(std::abs(median - 120.0) / 120.0 < 0.02);
    for (std::size_t t = 2; t + 4 < track.frames.size(); ++t)
      CHECK(track.frames[t].nccf_peak > 0.95);
  }

  SUBCASE("white noise is mostly unvoiced") {
    auto x = random_frame(8000, 31415, 0.5);
    auto track = track_pitch(x, fs);
    std::size_t unvoiced = 0;
    for (const auto& f : track.frames)
      if (!f.voiced) ++unvoiced;
    CHECK(double(unvoiced) / double(track.frames.size()) > 0.9);
  }

  SUBCASE("silence is all unvoiced with zero PNCC") {
    std::vector<double> x(4000, 0.0);
    auto track = track_pitch(x, fs);
    for (const auto& f : track.frames) {
      CHECK(!f.voiced);
      CHECK(f.f0_hz == 0.0);
      CHECK(f.nccf_peak == 0.0);
      CHECK(f.voicing_prob == 0.0);
    }
  }

  SUBCASE("deterministic across calls") {
    auto x = pulse_train(180.0, fs, 6000);
    auto a = track_pitch(x, fs);
    auto b = track_pitch(x, fs);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
      CHECK(a.frames[t].f0_hz == b.frames[t].f0_hz);
      CHECK(a.frames[t].nccf_peak == b.frames[t].nccf_peak);
      CHECK(a.frames[t].voiced == b.frames[t].voiced);
    }
  }
}

TEST_CASE("LPC and formants") {
  const double fs = 16000.0;

  SUBCASE("two-resonator vowel recovered within 5 percent") {
    // Independent synthesis: two cascaded second-order resonators driven by
    // a band-limited pulse train.
    auto excitation = pulse_train(100.0, fs, 1600, 3000.0, 0.3);
    auto resonate = [&](const std::vector<double>& in, double freq, double bw) {
      const double r = std::exp(-kPi * bw / fs);
      const double theta = 2.0 * kPi * freq / fs;
      std::vector<double> out(in.size(), 0.0);
      double y1 = 0.0, y2 = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double y = in[i] + 2.0 * r * std::cos(theta) * y1 - r * r * y2;
        out[i] = y;
        y2 = y1;
        y1 = y;
      }
      return out;
    };
    auto vowel = resonate(resonate(excitation, 700.0, 90.0), 1200.0, 110.0);
    std::vector<double> frame(vowel.begin() + 800, vowel.begin() + 1280);
    auto model = lpc(frame, 12);
    auto fmts = formants(model, fs, 2);
    REQUIRE(fmts.size() == 2);
    CHECK(std::abs(fmts[0] - 700.0) / 700.0 < 0.05);
    CHECK(std::abs(fmts[1] - 1200.0) / 1200.0 < 0.05);
  }

  SUBCASE("white noise gives near-zero predictor coefficients") {
    auto x = random_frame(4096, 777);
    auto model = lpc(x, 12);
    for (double a : model.coefficients) CHECK(std::abs(a) < 0.2);
  }

  SUBCASE("pure 500 Hz tone yields its own frequency as lowest formant") {
    auto x = tone(500.0, fs, 480, 0.5);
    auto model = lpc(x, 12);
    auto fmts = formants(model, fs, 3);
    REQUIRE(!fmts.empty());
    CHECK(std::abs(fmts[0] - 500.0) < 25.0);
  }

  SUBCASE("guards") {
    std::vector<double> silent(100, 0.0);
    CHECK_THROWS_AS(lpc(silent, 12), NumericError);
    std::vector<double> x(10, 0.5);
    CHECK_THROWS_AS(lpc(x, 12), DataError);
  }
}

TEST_SUITE_END();
