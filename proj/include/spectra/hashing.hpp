#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace spectra {

/// FNV-1a, stable across platforms; used for cache keys and config echoes.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return std::string(buf);
}

/// Canonical full-precision rendering of a double for hashing.
inline std::string canon(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf);
}

}  // namespace spectra
