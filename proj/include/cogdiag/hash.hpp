#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cogdiag {

// FNV-1a, 64-bit. Stable across platforms; used for cache keys and
// input digests, not for security.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline std::string digest_of(std::string_view s) { return hex_digest(fnv1a64(s)); }

}  // namespace cogdiag
