#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace sigvol {

inline std::string fmt_g(double x, int digits = 12) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

inline std::string fmt_exact(double x) { return fmt_g(x, 17); }

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sigvol
