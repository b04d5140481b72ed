#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace percam {

// File outputs carry floats at 9 significant digits: format with %.9g and
// parse back, so the serialized double is exactly what downstream readers see.
inline double round9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

inline std::string format9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace percam
