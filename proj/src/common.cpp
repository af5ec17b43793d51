#include "voicing/common.hpp"

#include <charconv>
#include <cstring>

namespace voicing {

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

namespace {
const char* kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t word = std::uint32_t(p[i]) << 16;
    if (i + 1 < len) word |= std::uint32_t(p[i + 1]) << 8;
    if (i + 2 < len) word |= std::uint32_t(p[i + 2]);
    out.push_back(kB64Alphabet[(word >> 18) & 0x3f]);
    out.push_back(kB64Alphabet[(word >> 12) & 0x3f]);
    out.push_back(i + 1 < len ? kB64Alphabet[(word >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[word & 0x3f] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw DataError("base64: misplaced padding");
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = value_of(c);
        if (vals[j] < 0) throw DataError("base64: invalid character");
        if (pad > 0) throw DataError("base64: data after padding");
      }
    }
    std::uint32_t word = (std::uint32_t(vals[0]) << 18) | (std::uint32_t(vals[1]) << 12) |
                         (std::uint32_t(vals[2]) << 6) | std::uint32_t(vals[3]);
    out.push_back(std::uint8_t((word >> 16) & 0xff));
    if (pad < 2) out.push_back(std::uint8_t((word >> 8) & 0xff));
    if (pad < 1) out.push_back(std::uint8_t(word & 0xff));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace voicing
