#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace bhp {

/// 17-significant-digit decimal rendering used by every file output.
/// The cemetery (NaN) renders as "cemetery".
inline std::string format_real(double v) {
  if (std::isnan(v)) return "cemetery";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace bhp
