#pragma once

#include <filesystem>

#include "voicing/common.hpp"

namespace voicing::wav {

struct Audio {
  Signal samples;
  double sample_rate = 0.0;
};

// 16-bit PCM mono RIFF only; samples are scaled to [-1, 1).
Audio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Signal& samples,
               double sample_rate);

// Windowed-sinc resampling (32 taps per side, Hann window).
Signal resample(const Signal& in, double src_rate, double dst_rate);

// Returns audio at the target rate, resampling with a warning to stderr when
// the source rate differs.
Audio read_wav_at(const std::filesystem::path& path, double target_rate);

}  // namespace voicing::wav
