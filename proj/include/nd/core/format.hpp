#pragma once

#include <cstdio>
#include <string>

namespace nd {

/// Locale-independent shortest-ish decimal for CSV/SVG output.
inline std::string fmt_num(double v, int precision = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

}  // namespace nd
