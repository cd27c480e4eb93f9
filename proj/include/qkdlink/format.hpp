#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace qkdlink {

inline constexpr int kSignificantDigits = 9;

// Shortest %g rendering at 9 significant digits; "-0" prints as "0".
inline std::string format_number(double v) {
  if (v == 0.0) return "0";
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", kSignificantDigits, v);
  return buf;
}

// Value rounded to 9 significant digits, for JSON serialization.
inline double round_sig(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v == 0.0 ? 0.0 : v;
  return std::strtod(format_number(v).c_str(), nullptr);
}

}  // namespace qkdlink
