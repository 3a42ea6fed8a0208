#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace driftbie {

// Result of one empirical-constant check.
struct CheckReport {
  std::string id;
  std::string inputs_digest;  // FNV-1a of the canonical input description
  double constant = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> constants;  // secondary values (min/max ratios, counts)
  double ceiling = std::numeric_limits<double>::infinity();
  bool pass = false;
  bool skipped = false;
  std::vector<int> trend_levels;
  std::vector<double> trend;  // primary constant per refinement level, when a study was run
  std::vector<std::string> notes;

  // Sets pass from constant/ceiling; non-finite constants fail.
  void judge();
  // Largest ratio between consecutive trend entries (>= 1), 1 when fewer than two.
  double trend_spread() const;
};

std::uint64_t fnv1a(const std::string& text);
std::string hex_digest(const std::string& text);

}  // namespace driftbie
