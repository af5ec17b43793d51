#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace voicing {

// Mono audio at a fixed sample rate; samples normalized to [-1, 1).
using Signal = std::vector<double>;

constexpr double kTargetSampleRate = 16000.0;

// Error taxonomy mirrored by the CLI exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags, unknown config keys, invalid parameter combinations (exit 1).
struct UsageError : Error {
  using Error::Error;
};

// Malformed or missing inputs: parse failures, unmapped phones,
// dimension/variant mismatches (exit 2).
struct DataError : Error {
  using Error::Error;
};

// Numerical failure: non-finite values, unstable recursions,
// optimizer non-convergence (exit 3).
struct NumericError : Error {
  using Error::Error;
};

// FNV-1a, used for config hashes and artifact checksums.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t fnv1a64(const std::string& s);
std::string to_hex(std::uint64_t v);

std::string base64_encode(const void* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Shortest round-trip decimal form of a double, for deterministic text output.
std::string format_double(double v);

}  // namespace voicing
