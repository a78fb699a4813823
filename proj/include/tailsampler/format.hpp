#pragma once

// Deterministic number formatting for CSV output: shortest round-trip form,
// so identical runs emit identical bytes.

#include <charconv>
#include <string>

namespace tailsampler {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace tailsampler
