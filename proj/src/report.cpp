#include "driftbie/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace driftbie {

void CheckReport::judge() {
  if (skipped) {
    pass = true;
    return;
  }
  pass = std::isfinite(constant) && constant <= ceiling;
}

double CheckReport::trend_spread() const {
  double spread = 1.0;
  for (size_t i = 1; i < trend.size(); ++i) {
    const double a = std::abs(trend[i - 1]), b = std::abs(trend[i]);
    if (a == 0.0 || b == 0.0) continue;
    spread = std::max(spread, std::max(a, b) / std::min(a, b));
  }
  return spread;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

}  // namespace driftbie
