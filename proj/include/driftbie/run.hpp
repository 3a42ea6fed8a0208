#pragma once

#include "driftbie/config.hpp"

#include <functional>
#include <optional>
#include <string>

namespace driftbie {

enum ExitCode : int { exit_ok = 0, exit_numerical = 1, exit_input = 2, exit_checks_failed = 3 };

struct RunOutcome {
  int exit_code = exit_ok;
  std::string message;
  std::vector<std::string> files;  // written, relative to the output directory
};

// Runs one command and writes summary.json, timings.json and the command's CSVs into cfg.out.
// Input errors found before any output exists leave the directory untouched.
RunOutcome run(const RunConfig& cfg, const std::function<void(const std::string&)>& log = {});

// Closed-form solution of the operator with these coefficients for the data, when one exists.
std::optional<std::function<double(const Vec3&)>> exact_solution(const DataSpec& data, const Coefficients& op);

// Deterministic interior probe points kept two panel diameters from the boundary.
std::vector<Vec3> probe_points(const BoundaryMesh& mesh, int count);

}  // namespace driftbie
