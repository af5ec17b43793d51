#include "voicing/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace voicing::dsp {

namespace {
constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

std::vector<double> hamming_window(std::size_t n) {
  if (n == 0) throw DataError("hamming_window: zero length");
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  for (std::size_t k = 0; k < n; ++k)
    w[k] = 0.54 - 0.46 * std::cos(2.0 * kPi * double(k) / double(n - 1));
  return w;
}

void fft_inplace(std::vector<std::complex<double>>& buf) {
  const std::size_t n = buf.size();
  if (!is_power_of_two(n)) throw DataError("fft: size must be a power of two");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / double(len);
    const std::complex<double> wn(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = buf[i + k];
        auto v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wn;
      }
    }
  }
}

Spectrum magnitude_fft(std::span<const double> frame, std::size_t n_fft,
                       double sample_rate) {
  if (!is_power_of_two(n_fft)) throw DataError("magnitude_fft: n_fft must be a power of two");
  if (frame.size() > n_fft)
    throw DataError("magnitude_fft: frame longer than n_fft (" +
                    std::to_string(frame.size()) + " > " + std::to_string(n_fft) + ")");
  std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
  fft_inplace(buf);
  Spectrum s;
  s.n_fft = n_fft;
  s.sample_rate = sample_rate;
  s.magnitudes.resize(n_fft / 2 + 1);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) s.magnitudes[k] = std::abs(buf[k]);
  return s;
}

double mel_from_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double hz_from_mel(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> MelFilterbank::apply(const Spectrum& spectrum) const {
  if (spectrum.magnitudes.size() != n_fft / 2 + 1)
    throw DataError("filterbank: spectrum size does not match n_fft");
  std::vector<double> out(n_filters, 0.0);
  const std::size_t bins = n_fft / 2 + 1;
  for (std::size_t m = 0; m < n_filters; ++m) {
    double acc = 0.0;
    const double* row = &weights[m * bins];
    for (std::size_t k = 0; k < bins; ++k) acc += row[k] * spectrum.magnitudes[k];
    out[m] = acc;
  }
  return out;
}

MelFilterbank mel_filterbank(std::size_t n_filters, std::size_t n_fft,
                             double sample_rate, double f_lo, double f_hi) {
  if (n_filters == 0) throw DataError("mel_filterbank: need at least one filter");
  if (!(f_lo < f_hi) || f_hi > sample_rate / 2.0)
    throw DataError("mel_filterbank: need f_lo < f_hi <= sample_rate/2");
  const double mel_lo = mel_from_hz(f_lo);
  const double mel_hi = mel_from_hz(f_hi);
  std::vector<double> points(n_filters + 2);
  for (std::size_t m = 0; m < points.size(); ++m)
    points[m] = hz_from_mel(mel_lo + (mel_hi - mel_lo) * double(m) / double(n_filters + 1));

  MelFilterbank fb;
  fb.n_filters = n_filters;
  fb.n_fft = n_fft;
  fb.sample_rate = sample_rate;
  const std::size_t bins = n_fft / 2 + 1;
  fb.weights.assign(n_filters * bins, 0.0);
  fb.edges.resize(n_filters);
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = points[m], center = points[m + 1], hi = points[m + 2];
    fb.edges[m] = {lo, center, hi};
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * sample_rate / double(n_fft);
      double w = 0.0;
      if (f >= lo && f <= center)
        w = (center > lo) ? (f - lo) / (center - lo) : 1.0;
      else if (f > center && f <= hi)
        w = (hi > center) ? (hi - f) / (hi - center) : 0.0;
      fb.weights[m * bins + k] = w;
      row_sum += w;
    }
    if (row_sum <= 0.0)
      throw DataError("mel_filterbank: filter " + std::to_string(m + 1) +
                      " covers no FFT bin; fewer filters or a larger FFT needed");
  }
  return fb;
}

namespace {

// Orthonormal DCT-II of x, first n_out coefficients.
std::vector<double> dct2_ortho(const std::vector<double>& x, int n_out) {
  const std::size_t m = x.size();
  std::vector<double> out(std::size_t(n_out), 0.0);
  for (int j = 0; j < n_out; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      acc += x[i] * std::cos(kPi * double(j) * (2.0 * double(i) + 1.0) / (2.0 * double(m)));
    const double scale = (j == 0) ? std::sqrt(1.0 / double(m)) : std::sqrt(2.0 / double(m));
    out[std::size_t(j)] = acc * scale;
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> mfcc_frames(std::span<const double> signal,
                                             const MfccConfig& config,
                                             const MelFilterbank& filterbank) {
  if (config.n_ceps <= 0 || std::size_t(config.n_ceps) > filterbank.n_filters)
    throw DataError("mfcc: need 0 < n_ceps <= n_filters");
  const double fs = filterbank.sample_rate;
  const auto frame_len = std::size_t(std::llround(config.frame_len_s * fs));
  const auto hop = std::size_t(std::llround(config.frame_hop_s * fs));
  if (frame_len == 0 || hop == 0) throw DataError("mfcc: frame length and hop must be positive");
  if (signal.size() < frame_len)
    throw DataError("mfcc: signal shorter than one frame");

  std::vector<double> emphasized(signal.size());
  const double a = config.pre_emphasis;
  emphasized[0] = signal[0] * (1.0 - a);
  for (std::size_t i = 1; i < signal.size(); ++i)
    emphasized[i] = signal[i] - a * signal[i - 1];

  const auto window = hamming_window(frame_len);
  const std::size_t n_frames = 1 + (signal.size() - frame_len) / hop;
  std::vector<std::vector<double>> out;
  out.reserve(n_frames);
  std::vector<double> frame(frame_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < frame_len; ++i)
      frame[i] = emphasized[start + i] * window[i];
    const auto spectrum = magnitude_fft(frame, filterbank.n_fft, fs);
    auto energies = filterbank.apply(spectrum);
    for (auto& e : energies) e = std::log(std::max(e, config.log_floor));
    out.push_back(dct2_ortho(energies, config.n_ceps));
  }
  return out;
}

std::vector<std::vector<double>> deltas(
    const std::vector<std::vector<double>>& coeffs, int window) {
  if (window < 1) throw DataError("deltas: window must be >= 1");
  if (coeffs.empty()) return {};
  const auto t_max = std::ptrdiff_t(coeffs.size()) - 1;
  const std::size_t dim = coeffs.front().size();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += double(n) * double(n);
  denom *= 2.0;

  auto clamped = [&](std::ptrdiff_t t) -> const std::vector<double>& {
    return coeffs[std::size_t(std::clamp<std::ptrdiff_t>(t, 0, t_max))];
  };
  std::vector<std::vector<double>> out(coeffs.size(), std::vector<double>(dim, 0.0));
  for (std::ptrdiff_t t = 0; t <= t_max; ++t)
    for (std::size_t d = 0; d < dim; ++d) {
      double acc = 0.0;
      for (int n = 1; n <= window; ++n)
        acc += double(n) * (clamped(t + n)[d] - clamped(t - n)[d]);
      out[std::size_t(t)][d] = acc / denom;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Butterworth design: analog prototype, bilinear transform with prewarping.
// The prototype cutoff is placed so that the passband edge sits just inside
// the ripple budget (design margin 0.1 dB / 0.5 dB), giving strict
// inequalities at the declared edges.
// ---------------------------------------------------------------------------

namespace {

double prewarp(double hz, double fs) { return 2.0 * fs * std::tan(kPi * hz / fs); }

int butterworth_order(double ap_db, double as_db, double selectivity) {
  const double num =
      std::log10((std::pow(10.0, as_db / 10.0) - 1.0) / (std::pow(10.0, ap_db / 10.0) - 1.0));
  return int(std::ceil(num / (2.0 * std::log10(selectivity))));
}

std::complex<double> bilinear(std::complex<double> s, double fs) {
  return (2.0 * fs + s) / (2.0 * fs - s);
}

// Prototype poles for unit-cutoff Butterworth of the given order, scaled by wc.
std::vector<std::complex<double>> butterworth_poles(int order, double wc) {
  std::vector<std::complex<double>> poles;
  poles.reserve(std::size_t(order));
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + 1.0) / (2.0 * order) + kPi / 2.0;
    poles.emplace_back(wc * std::cos(theta), wc * std::sin(theta));
  }
  return poles;
}

// Group z-plane poles into conjugate pairs (plus real leftovers paired
// together), most-damped sections first.
std::vector<Biquad> pair_poles(std::vector<std::complex<double>> zpoles,
                               int zeros_at_plus1, int zeros_at_minus1) {
  std::vector<std::complex<double>> upper, reals;
  for (const auto& p : zpoles) {
    if (std::abs(p.imag()) < 1e-12)
      reals.push_back(p);
    else if (p.imag() > 0)
      upper.push_back(p);
  }
  auto by_radius = [](const std::complex<double>& a, const std::complex<double>& b) {
    return std::abs(a) < std::abs(b);
  };
  std::sort(upper.begin(), upper.end(), by_radius);
  std::sort(reals.begin(), reals.end(), by_radius);

  std::vector<Biquad> sections;
  auto take_zero_pair = [&](Biquad& s) {
    // Prefer one zero from each stack so every section keeps a (z-1)(z+1)
    // numerator while stock lasts; fall back to whichever remains.
    if (zeros_at_plus1 > 0 && zeros_at_minus1 > 0) {
      s.b0 = 1, s.b1 = 0, s.b2 = -1;
      --zeros_at_plus1;
      --zeros_at_minus1;
    } else if (zeros_at_minus1 >= 2) {
      s.b0 = 1, s.b1 = 2, s.b2 = 1;
      zeros_at_minus1 -= 2;
    } else if (zeros_at_plus1 >= 2) {
      s.b0 = 1, s.b1 = -2, s.b2 = 1;
      zeros_at_plus1 -= 2;
    } else if (zeros_at_minus1 == 1) {
      s.b0 = 1, s.b1 = 1, s.b2 = 0;
      zeros_at_minus1 = 0;
    } else if (zeros_at_plus1 == 1) {
      s.b0 = 1, s.b1 = -1, s.b2 = 0;
      zeros_at_plus1 = 0;
    } else {
      s.b0 = 1, s.b1 = 0, s.b2 = 0;
    }
  };
  for (const auto& p : upper) {
    Biquad s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    take_zero_pair(s);
    sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s;
    s.a1 = -(reals[i].real() + reals[i + 1].real());
    s.a2 = reals[i].real() * reals[i + 1].real();
    take_zero_pair(s);
    sections.push_back(s);
  }
  if (reals.size() % 2 == 1) {
    Biquad s;
    s.a1 = -reals.back().real();
    s.a2 = 0.0;
    if (zeros_at_minus1 > 0) {
      s.b0 = 1, s.b1 = 1, s.b2 = 0;
      --zeros_at_minus1;
    } else if (zeros_at_plus1 > 0) {
      s.b0 = 1, s.b1 = -1, s.b2 = 0;
      --zeros_at_plus1;
    } else {
      s.b0 = 1, s.b1 = 0, s.b2 = 0;
    }
    sections.push_back(s);
  }
  return sections;
}

std::complex<double> section_response(const Biquad& s, std::complex<double> zinv) {
  const auto zinv2 = zinv * zinv;
  return (s.b0 + s.b1 * zinv + s.b2 * zinv2) / (1.0 + s.a1 * zinv + s.a2 * zinv2);
}

double cascade_magnitude(const std::vector<Biquad>& sections, double gain,
                         double hz, double fs) {
  const double w = 2.0 * kPi * hz / fs;
  const std::complex<double> zinv(std::cos(-w), std::sin(-w));
  double mag = std::abs(gain);
  for (const auto& s : sections) mag *= std::abs(section_response(s, zinv));
  return mag;
}

constexpr int kMaxButterworthOrder = 24;
constexpr double kRippleMarginDb = 0.1;
constexpr double kAttenMarginDb = 0.5;

}  // namespace

IirFilter butterworth_bandpass(const BandpassSpec& spec, double sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const bool lowpass = spec.pass_lo <= 0.0;
  if (!(spec.pass_hi > spec.pass_lo) || !(spec.stop_hi > spec.pass_hi) ||
      spec.stop_hi >= nyquist)
    throw DataError("butterworth: need pass_lo < pass_hi < stop_hi < sample_rate/2");
  if (!lowpass && !(spec.stop_lo < spec.pass_lo))
    throw DataError("butterworth: need stop_lo < pass_lo");
  const double ap = spec.max_passband_ripple_db - kRippleMarginDb;
  const double as = spec.min_stopband_atten_db + kAttenMarginDb;
  if (ap <= 0.0) throw DataError("butterworth: passband ripple budget too small");

  IirFilter filter;
  if (lowpass) {
    const double wp = prewarp(spec.pass_hi, sample_rate);
    const double ws = prewarp(spec.stop_hi, sample_rate);
    const int order = butterworth_order(ap, as, ws / wp);
    if (order > kMaxButterworthOrder)
      throw DataError("butterworth: spec needs order " + std::to_string(order) +
                      " (> " + std::to_string(kMaxButterworthOrder) + "); widen the transition band");
    const double epsilon = std::sqrt(std::pow(10.0, ap / 10.0) - 1.0);
    const double wc = wp * std::pow(epsilon, -1.0 / order);
    std::vector<std::complex<double>> zpoles;
    for (const auto& p : butterworth_poles(order, wc))
      zpoles.push_back(bilinear(p, sample_rate));
    filter.sections = pair_poles(std::move(zpoles), 0, order);
    filter.order = order;
    filter.gain = 1.0;
    const double dc = cascade_magnitude(filter.sections, 1.0, 0.0, sample_rate);
    filter.gain = 1.0 / dc;
  } else {
    const double w1 = prewarp(spec.pass_lo, sample_rate);
    const double w2 = prewarp(spec.pass_hi, sample_rate);
    const double w0_sq = w1 * w2;
    const double bw = w2 - w1;
    auto selectivity = [&](double stop_hz) {
      const double w = prewarp(stop_hz, sample_rate);
      return std::abs((w * w - w0_sq) / (bw * w));
    };
    const double sel = std::min(selectivity(spec.stop_lo), selectivity(spec.stop_hi));
    if (sel <= 1.0) throw DataError("butterworth: stopband edges inside the passband");
    const int order = butterworth_order(ap, as, sel);
    if (order > kMaxButterworthOrder)
      throw DataError("butterworth: spec needs order " + std::to_string(order) +
                      " (> " + std::to_string(kMaxButterworthOrder) + "); widen the transition bands");
    const double epsilon = std::sqrt(std::pow(10.0, ap / 10.0) - 1.0);
    const double wc = std::pow(epsilon, -1.0 / order);
    std::vector<std::complex<double>> zpoles;
    for (const auto& p : butterworth_poles(order, wc)) {
      // Lowpass-to-bandpass: each prototype pole spawns the two roots of
      // s^2 - bw*p*s + w0^2 = 0.
      const auto bp = bw * p;
      const auto disc = std::sqrt(bp * bp - 4.0 * w0_sq);
      zpoles.push_back(bilinear((bp + disc) / 2.0, sample_rate));
      zpoles.push_back(bilinear((bp - disc) / 2.0, sample_rate));
    }
    filter.sections = pair_poles(std::move(zpoles), order, order);
    filter.order = 2 * order;
    filter.gain = 1.0;
    // Peak of the warped response maps back to this digital frequency.
    const double f_peak = sample_rate / kPi * std::atan(std::sqrt(w0_sq) / (2.0 * sample_rate));
    const double peak = cascade_magnitude(filter.sections, 1.0, f_peak, sample_rate);
    if (!(peak > 0.0) || !std::isfinite(peak))
      throw NumericError("butterworth: degenerate response at band center");
    filter.gain = 1.0 / peak;
  }
  return filter;
}

std::vector<double> IirFilter::apply(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : sections) {
    // Direct form II transposed.
    double z1 = 0.0, z2 = 0.0;
    for (auto& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  for (auto& v : y) v *= gain;
  return y;
}

double IirFilter::response_db(double hz, double sample_rate) const {
  const double mag = cascade_magnitude(sections, gain, hz, sample_rate);
  return 20.0 * std::log10(std::max(mag, 1e-300));
}

double rms(std::span<const double> x) {
  if (x.empty()) throw DataError("rms: empty signal");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / double(x.size()));
}

double band_energy(const IirFilter& filter, std::span<const double> x,
                   std::size_t measure_from) {
  if (x.empty() || measure_from >= x.size())
    throw DataError("band_energy: empty measurement span");
  const auto y = filter.apply(x);
  double acc = 0.0;
  for (std::size_t i = measure_from; i < y.size(); ++i) acc += y[i] * y[i];
  return acc / double(y.size() - measure_from);
}

std::vector<double> nccf(std::span<const double> frame, int lag_min,
                         int lag_max, int window) {
  if (lag_min < 1 || lag_max < lag_min || window < 1)
    throw DataError("nccf: need 1 <= lag_min <= lag_max and window >= 1");
  if (frame.size() < std::size_t(window + lag_max))
    throw DataError("nccf: frame too short for max lag plus correlation window");
  // Prefix sums of squares give the shifted-window energies in O(1).
  std::vector<double> sq_prefix(frame.size() + 1, 0.0);
  for (std::size_t i = 0; i < frame.size(); ++i)
    sq_prefix[i + 1] = sq_prefix[i] + frame[i] * frame[i];
  const double e0 = sq_prefix[std::size_t(window)];

  std::vector<double> phi(std::size_t(lag_max - lag_min + 1), 0.0);
  for (int k = lag_min; k <= lag_max; ++k) {
    const double ek = sq_prefix[std::size_t(k + window)] - sq_prefix[std::size_t(k)];
    if (e0 <= 0.0 || ek <= 0.0) continue;
    double num = 0.0;
    for (int n = 0; n < window; ++n) num += frame[std::size_t(n)] * frame[std::size_t(n + k)];
    phi[std::size_t(k - lag_min)] = std::clamp(num / std::sqrt(e0 * ek), -1.0, 1.0);
  }
  return phi;
}

namespace {

struct PitchCandidate {
  double lag = 0.0;  // refined (fractional) lag in samples
  double peak = 0.0;
};

// Local maxima of phi above the threshold, strongest first, parabolic lag
// refinement around each peak.
std::vector<PitchCandidate> pick_candidates(const std::vector<double>& phi,
                                            int lag_min, double threshold,
                                            int max_candidates) {
  std::vector<PitchCandidate> cands;
  const int n = int(phi.size());
  for (int i = 0; i < n; ++i) {
    const double left = (i > 0) ? phi[std::size_t(i - 1)] : -2.0;
    const double right = (i + 1 < n) ? phi[std::size_t(i + 1)] : -2.0;
    if (phi[std::size_t(i)] <= threshold) continue;
    if (phi[std::size_t(i)] > left && phi[std::size_t(i)] >= right) {
      // Parabolic refinement of both the lag and the peak value; periods that
      // fall between integer lags would otherwise lose to exact-integer
      // subharmonics.
      double delta = 0.0;
      double peak = phi[std::size_t(i)];
      if (i > 0 && i + 1 < n) {
        const double denom = left - 2.0 * phi[std::size_t(i)] + right;
        if (std::abs(denom) > 1e-12) {
          delta = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
          peak = std::min(1.0, phi[std::size_t(i)] - 0.25 * (left - right) * delta);
        }
      }
      cands.push_back({double(lag_min + i) + delta, peak});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.peak != b.peak) return a.peak > b.peak;
    return a.lag < b.lag;
  });
  if (int(cands.size()) > max_candidates) cands.resize(std::size_t(max_candidates));
  return cands;
}

}  // namespace

PitchTrack track_pitch(std::span<const double> signal, double sample_rate,
                       const PitchConfig& config) {
  if (!(config.f0_min > 0.0) || !(config.f0_max > config.f0_min))
    throw DataError("track_pitch: need 0 < f0_min < f0_max");
  const int lag_min = std::max(1, int(std::floor(sample_rate / config.f0_max)));
  const int lag_max = int(std::ceil(sample_rate / config.f0_min));
  const int window = std::max(1, int(std::llround(config.corr_window_s * sample_rate)));
  const int hop = std::max(1, int(std::llround(config.frame_hop_s * sample_rate)));

  PitchTrack track;
  if (signal.empty()) return track;

  // Pad so trailing frames always have window + lag_max samples.
  std::vector<double> padded(signal.begin(), signal.end());
  padded.resize(signal.size() + std::size_t(window + lag_max), 0.0);

  const std::size_t n_frames = (signal.size() + std::size_t(hop) - 1) / std::size_t(hop);
  std::vector<std::vector<PitchCandidate>> candidates(n_frames);
  std::vector<double> frame_peak(n_frames, 0.0);
  std::vector<double> frame_time(n_frames, 0.0);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * std::size_t(hop);
    frame_time[t] = (double(start) + window / 2.0) / sample_rate;
    const auto phi = nccf(std::span<const double>(padded).subspan(start), lag_min, lag_max, window);
    frame_peak[t] = phi.empty() ? 0.0 : *std::max_element(phi.begin(), phi.end());
    candidates[t] =
        pick_candidates(phi, lag_min, config.candidate_threshold, config.max_candidates);
  }

  // Viterbi over per-frame states: the candidates plus one unvoiced state
  // (index = candidates[t].size()).
  const double unvoiced_cost = 1.0 - config.voicing_threshold;
  std::vector<std::vector<double>> cost(n_frames);
  std::vector<std::vector<int>> back(n_frames);
  auto local_cost = [&](std::size_t t, std::size_t s) {
    if (s == candidates[t].size()) return unvoiced_cost;
    // Octave-scaled lag bias: near-equal peaks resolve toward the shorter
    // lag, which keeps exact-integer subharmonics from capturing the path.
    const auto& c = candidates[t][s];
    return (1.0 - c.peak) + config.lag_bias * std::log2(c.lag / double(lag_min));
  };
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t n_states = candidates[t].size() + 1;
    cost[t].assign(n_states, 0.0);
    back[t].assign(n_states, -1);
    for (std::size_t s = 0; s < n_states; ++s) {
      double best = local_cost(t, s);
      if (t > 0) {
        double best_prev = std::numeric_limits<double>::infinity();
        int best_idx = -1;
        const std::size_t prev_states = candidates[t - 1].size() + 1;
        for (std::size_t p = 0; p < prev_states; ++p) {
          const bool prev_voiced = p < candidates[t - 1].size();
          const bool cur_voiced = s < candidates[t].size();
          double trans = 0.0;
          if (prev_voiced != cur_voiced)
            trans = config.switch_cost;
          else if (prev_voiced && cur_voiced)
            trans = config.octave_cost *
                    std::abs(std::log2(candidates[t][s].lag / candidates[t - 1][p].lag));
          const double total = cost[t - 1][p] + trans;
          if (total < best_prev) {
            best_prev = total;
            best_idx = int(p);
          }
        }
        best += best_prev;
        back[t][s] = best_idx;
      }
      cost[t][s] = best;
    }
  }

  std::vector<int> path(n_frames, 0);
  {
    const auto& last = cost[n_frames - 1];
    path[n_frames - 1] = int(std::min_element(last.begin(), last.end()) - last.begin());
    for (std::size_t t = n_frames - 1; t > 0; --t)
      path[t - 1] = back[t][std::size_t(path[t])];
  }

  track.frames.resize(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    PitchFrame f;
    f.time_s = frame_time[t];
    f.nccf_peak = std::clamp(frame_peak[t], -1.0, 1.0);
    const std::size_t s = std::size_t(path[t]);
    if (s < candidates[t].size()) {
      f.voiced = true;
      f.f0_hz = sample_rate / candidates[t][s].lag;
      f.voicing_prob = std::max(0.0, candidates[t][s].peak);
    }
    track.frames[t] = f;
  }
  return track;
}

LpcModel lpc(std::span<const double> frame, int order) {
  if (order < 2) throw DataError("lpc: order must be >= 2");
  if (frame.size() <= std::size_t(2 * order))
    throw DataError("lpc: frame length must exceed 2*order");
  // Autocorrelation method: taper the frame so the implicit rectangular
  // truncation does not bias the pole estimates.
  const auto window = hamming_window(frame.size());
  std::vector<double> tapered(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) tapered[i] = frame[i] * window[i];
  std::vector<double> r(std::size_t(order) + 1, 0.0);
  for (int j = 0; j <= order; ++j) {
    double acc = 0.0;
    for (std::size_t n = 0; n + std::size_t(j) < tapered.size(); ++n)
      acc += tapered[n] * tapered[n + std::size_t(j)];
    r[std::size_t(j)] = acc;
  }
  if (r[0] <= 0.0) throw NumericError("lpc: zero-energy frame");
  r[0] *= 1.0 + 1e-9;  // white-noise ridge keeps near-singular frames solvable

  std::vector<double> a(std::size_t(order) + 1, 0.0);  // predictor a_1..a_order
  double err = r[0];
  for (int i = 1; i <= order; ++i) {
    double acc = r[std::size_t(i)];
    for (int j = 1; j < i; ++j) acc -= a[std::size_t(j)] * r[std::size_t(i - j)];
    const double k = acc / err;
    std::vector<double> prev(a.begin(), a.begin() + i);
    a[std::size_t(i)] = k;
    for (int j = 1; j < i; ++j)
      a[std::size_t(j)] = prev[std::size_t(j)] - k * prev[std::size_t(i - j)];
    err *= 1.0 - k * k;
    if (err <= 0.0 || !std::isfinite(err))
      throw NumericError("lpc: non-positive prediction error at order " + std::to_string(i));
  }
  LpcModel model;
  model.order = order;
  model.coefficients.assign(a.begin() + 1, a.end());
  model.gain = std::sqrt(err / double(frame.size()));
  return model;
}

namespace {

// Durand-Kerner iteration for all roots of a monic complex polynomial.
std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& monic) {
  const std::size_t degree = monic.size() - 1;
  if (degree == 0) return {};
  std::vector<std::complex<double>> roots(degree);
  const std::complex<double> seed(0.4, 0.9);
  std::complex<double> z(1.0, 0.0);
  for (auto& root : roots) {
    z *= seed;
    root = z;
  }
  auto eval = [&](std::complex<double> x) {
    std::complex<double> acc(monic[0], 0.0);
    for (std::size_t i = 1; i < monic.size(); ++i) acc = acc * x + monic[i];
    return acc;
  };
  for (int iter = 0; iter < 500; ++iter) {
    double worst = 0.0;
    for (std::size_t i = 0; i < degree; ++i) {
      std::complex<double> denom(1.0, 0.0);
      for (std::size_t j = 0; j < degree; ++j)
        if (j != i) denom *= roots[i] - roots[j];
      if (std::abs(denom) < 1e-30) denom = 1e-30;
      const auto delta = eval(roots[i]) / denom;
      roots[i] -= delta;
      worst = std::max(worst, std::abs(delta));
    }
    if (worst < 1e-13) break;
  }
  return roots;
}

}  // namespace

std::vector<double> formants(const LpcModel& model, double sample_rate, int n) {
  if (n <= 0) return {};
  // A(z) = 1 - sum a_k z^-k; roots of z^p - a_1 z^{p-1} - ... - a_p.
  std::vector<double> monic(std::size_t(model.order) + 1, 0.0);
  monic[0] = 1.0;
  for (int k = 1; k <= model.order; ++k)
    monic[std::size_t(k)] = -model.coefficients[std::size_t(k - 1)];
  auto roots = polynomial_roots(monic);

  std::vector<double> freqs;
  for (auto r : roots) {
    if (r.imag() <= 1e-9) continue;  // keep one of each conjugate pair
    double radius = std::abs(r);
    if (radius > 1.0) {
      r = std::conj(r) / std::norm(r);  // reflect inside the unit circle
      radius = std::abs(r);
    }
    if (radius <= 0.0) continue;
    const double bandwidth = -sample_rate / kPi * std::log(radius);
    if (bandwidth >= 700.0) continue;
    freqs.push_back(std::atan2(r.imag(), r.real()) / (2.0 * kPi) * sample_rate);
  }
  std::sort(freqs.begin(), freqs.end());
  if (int(freqs.size()) > n) freqs.resize(std::size_t(n));
  return freqs;
}

}  // namespace voicing::dsp
