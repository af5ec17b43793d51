#include "voicing/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>

namespace voicing::wav {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

}  // namespace

Audio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("wav: not a RIFF/WAVE file: " + path.string());

  Audio audio;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError("wav: truncated chunk in " + path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("wav: short fmt chunk in " + path.string());
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      audio.sample_rate = double(read_u32(bytes.data() + body + 4));
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt in " + path.string());
      if (format != 1 || bits != 16)
        throw DataError("wav: only 16-bit PCM supported: " + path.string());
      if (channels != 1)
        throw DataError("wav: only mono supported (got " + std::to_string(channels) +
                        " channels): " + path.string());
      const std::size_t n = size / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = std::int16_t(read_u16(bytes.data() + body + 2 * i));
        audio.samples[i] = double(raw) / 32768.0;
      }
      return audio;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  throw DataError("wav: missing data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const Signal& samples,
               double sample_rate) {
  std::vector<std::uint8_t> out;
  out.reserve(44 + samples.size() * 2);
  const std::uint32_t data_size = std::uint32_t(samples.size() * 2);
  const auto rate = std::uint32_t(std::llround(sample_rate));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_size);
  for (double v : samples) {
    const double scaled = std::clamp(v, -1.0, 32767.0 / 32768.0) * 32768.0;
    const auto q = std::int16_t(std::llround(scaled));
    put_u16(out, std::uint16_t(q));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("wav: cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
}

Signal resample(const Signal& in, double src_rate, double dst_rate) {
  if (src_rate <= 0.0 || dst_rate <= 0.0) throw DataError("resample: rates must be positive");
  if (src_rate == dst_rate || in.empty()) return in;
  constexpr int kTaps = 32;
  const double ratio = dst_rate / src_rate;
  const double cutoff = std::min(1.0, ratio);  // anti-alias when downsampling
  const auto n_out = std::size_t(std::floor(double(in.size()) * ratio));
  Signal out(n_out, 0.0);
  constexpr double pi = std::numbers::pi;
  for (std::size_t n = 0; n < n_out; ++n) {
    const double center = double(n) / ratio;
    const auto k_lo = std::int64_t(std::ceil(center)) - kTaps;
    const auto k_hi = std::int64_t(std::floor(center)) + kTaps;
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(0, k_lo);
         k <= std::min<std::int64_t>(std::int64_t(in.size()) - 1, k_hi); ++k) {
      const double x = center - double(k);
      // sin(pi c x)/(pi x) is the lowpass kernel with gain c built in.
      const double kernel = (x == 0.0) ? cutoff : std::sin(pi * cutoff * x) / (pi * x);
      const double hann = 0.5 + 0.5 * std::cos(pi * x / double(kTaps + 1));
      acc += in[std::size_t(k)] * kernel * hann;
    }
    out[n] = acc;
  }
  return out;
}

Audio read_wav_at(const std::filesystem::path& path, double target_rate) {
  Audio audio = read_wav(path);
  if (audio.sample_rate != target_rate) {
    std::cerr << "warning: " << path.string() << " is " << audio.sample_rate
              << " Hz; resampling to " << target_rate << " Hz\n";
    audio.samples = resample(audio.samples, audio.sample_rate, target_rate);
    audio.sample_rate = target_rate;
  }
  return audio;
}

}  // namespace voicing::wav
