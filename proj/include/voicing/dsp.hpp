#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "voicing/common.hpp"

// Signal-processing kernels: windowing, FFT, mel filterbank, MFCC with
// dynamic coefficients, Butterworth bandpass design, band energies, NCCF
// pitch tracking with dynamic programming, and LPC formant estimation.
// Everything here is a pure function of its inputs and deterministic
// bit-for-bit under a fixed configuration.

namespace voicing::dsp {

// w[k] = 0.54 - 0.46 cos(2 pi k / (n-1)); n = 1 degenerates to [1.0].
std::vector<double> hamming_window(std::size_t n);

struct Spectrum {
  std::vector<double> magnitudes;  // bins 0 .. n_fft/2
  std::size_t n_fft = 0;
  double sample_rate = 0.0;

  double bin_hz() const { return sample_rate / static_cast<double>(n_fft); }
};

// In-place radix-2 Cooley-Tukey; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& buf);

// Magnitude DFT of a frame zero-padded to n_fft (power of two).
// Throws DataError if the frame is longer than n_fft.
Spectrum magnitude_fft(std::span<const double> frame, std::size_t n_fft,
                       double sample_rate);

double mel_from_hz(double hz);
double hz_from_mel(double mel);

struct MelFilterbank {
  std::size_t n_filters = 0;
  std::size_t n_fft = 0;
  double sample_rate = 0.0;
  std::vector<double> weights;  // n_filters x (n_fft/2 + 1), row-major
  struct Edges {
    double lo_hz, center_hz, hi_hz;
  };
  std::vector<Edges> edges;  // one per filter

  double weight(std::size_t filter, std::size_t bin) const {
    return weights[filter * (n_fft / 2 + 1) + bin];
  }
  // Per-filter weighted sums of the spectrum magnitudes.
  std::vector<double> apply(const Spectrum& spectrum) const;
};

// Triangular filters equally spaced on the mel scale between f_lo and f_hi.
// Adjacent triangles share edges. Throws DataError when a filter covers no
// FFT bin (n_filters too large for the FFT resolution).
MelFilterbank mel_filterbank(std::size_t n_filters, std::size_t n_fft,
                             double sample_rate, double f_lo, double f_hi);

struct MfccConfig {
  int n_ceps = 13;
  bool include_deltas = false;  // consumers append deltas for 39-dim variants
  double pre_emphasis = 0.97;
  double frame_len_s = 0.010;
  double frame_hop_s = 0.005;
  int delta_window = 2;
  double log_floor = 1e-10;  // silent-frame floor inside the log
};

// Per-frame MFCCs: pre-emphasis -> Hamming -> magnitude FFT -> filterbank ->
// log -> orthonormal DCT-II, keeping coefficients 0 .. n_ceps-1.
// The signal must hold at least one full frame.
std::vector<std::vector<double>> mfcc_frames(std::span<const double> signal,
                                             const MfccConfig& config,
                                             const MelFilterbank& filterbank);

// Regression-style dynamic coefficients with replicated edge padding:
//   d_t = sum_{n=1..N} n (c_{t+n} - c_{t-n}) / (2 sum n^2)
std::vector<std::vector<double>> deltas(
    const std::vector<std::vector<double>>& coeffs, int window = 2);

struct BandpassSpec {
  double pass_lo = 0.0;  // 0 selects a lowpass limb (no lower stopband)
  double pass_hi = 0.0;
  double stop_lo = 0.0;
  double stop_hi = 0.0;
  double max_passband_ripple_db = 3.0;
  double min_stopband_atten_db = 40.0;
};

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;  // numerator
  double a1 = 0, a2 = 0;          // denominator (a0 = 1)
};

struct IirFilter {
  std::vector<Biquad> sections;
  double gain = 1.0;
  int order = 0;

  // Causal single-pass cascade, zero initial state.
  std::vector<double> apply(std::span<const double> x) const;
  // |H(e^{j 2 pi hz / fs})| in dB, evaluated directly on the sections.
  double response_db(double hz, double sample_rate) const;
};

// Minimal-order Butterworth meeting the ripple/attenuation spec, designed by
// bilinear transform with frequency prewarping and realized as second-order
// sections. pass_lo <= 0 designs the lowpass limb. Throws DataError when the
// spec is infeasible at the given sample rate.
IirFilter butterworth_bandpass(const BandpassSpec& spec, double sample_rate);

double rms(std::span<const double> x);

// Mean of squared filtered samples, accumulated from measure_from onward so
// callers can prepend warm-up context without counting it.
double band_energy(const IirFilter& filter, std::span<const double> x,
                   std::size_t measure_from = 0);

// phi(k) = sum s(n) s(n+k) / sqrt(sum s(n)^2 * sum s(n+k)^2) over a window of
// `window` samples, for k in [lag_min, lag_max]. Zero-energy windows give 0.
// The frame must hold window + lag_max samples.
std::vector<double> nccf(std::span<const double> frame, int lag_min,
                         int lag_max, int window);

struct PitchConfig {
  double f0_min = 50.0;
  double f0_max = 400.0;
  double corr_window_s = 0.010;
  double frame_hop_s = 0.005;
  // Dynamic-programming costs. A frame is attracted to the voiced state when
  // its peak exceeds voicing_threshold; lag_bias (per octave above the
  // minimum lag) resolves subharmonic ties toward the shorter lag.
  double voicing_threshold = 0.45;
  double switch_cost = 0.2;
  double octave_cost = 0.35;
  double lag_bias = 0.01;
  double candidate_threshold = 0.2;
  int max_candidates = 8;
};

struct PitchFrame {
  double time_s = 0.0;
  double f0_hz = 0.0;  // 0 when unvoiced
  bool voiced = false;
  double nccf_peak = 0.0;  // max NCCF over lags (the PNCC), in [-1, 1]
  double voicing_prob = 0.0;
};

struct PitchTrack {
  std::vector<PitchFrame> frames;
};

// NCCF candidate peaks per frame followed by a Viterbi pass over candidates
// plus an unvoiced state. Local cost 1 - peak (plus a small lag bias),
// octave-jump and voicing-switch transition penalties. Deterministic;
// degenerate signals yield all-unvoiced tracks.
PitchTrack track_pitch(std::span<const double> signal, double sample_rate,
                       const PitchConfig& config = {});

struct LpcModel {
  int order = 0;
  // Predictor coefficients a_k of x^[n] = sum a_k x[n-k]; A(z) = 1 - sum a_k z^-k.
  std::vector<double> coefficients;
  double gain = 0.0;  // sqrt of the final prediction-error power
};

// Autocorrelation method (Hamming-tapered frame) + Levinson-Durbin. Requires
// frame length > 2*order; throws NumericError when the recursion loses
// positive prediction error.
LpcModel lpc(std::span<const double> frame, int order);

// Frequencies (Hz, ascending) of complex A(z) roots with bandwidth < 700 Hz;
// at most n values. Roots outside the unit circle are reflected inside first.
std::vector<double> formants(const LpcModel& model, double sample_rate, int n);

}  // namespace voicing::dsp
