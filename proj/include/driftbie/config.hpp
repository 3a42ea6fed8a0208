#pragma once

#include "driftbie/boundary_data.hpp"
#include "driftbie/geometry.hpp"
#include "driftbie/kernels.hpp"
#include "driftbie/panel_integration.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace driftbie {

enum class Command { solve_regularity, solve_dirichlet_adjoint, harmonic_measure, verify, convergence_study };
std::string to_string(Command c);
Command parse_command(const std::string& name);

struct Tolerances {
  double interior_probe = 0.01;   // relative interior error against a closed-form solution
  double solve_residual = 0.05;   // relative W12 (or L2) residual of the boundary solve
  double max_condition = 1e12;
  double crossval_relative = 0.05;  // harmonic measure: panel tolerance max(rel * kernel, sigmas * se)
  double crossval_sigmas = 3.0;
  double kernel_total = 0.02;     // |int k - 1|
  std::map<std::string, double> ceilings;  // check id -> ceiling
};

struct HarmonicMeasureBlock {
  long long paths = 100000;
  std::optional<Vec3> x0;  // default: the domain's interior point
  double step = 0.0;       // <= 0: 1e-3 diam
  bool kernel = true;      // Green-representation kernel and cross-validation
  int kernel_flat_subdivisions = 0;
  int kernel_quadrature_order = 0;  // 0: same as the domain
  std::vector<std::string> structure;  // doubling, b2, green-comparison, comparison-principle
  double doubling_r_cap = 0.0;
};

struct VerifyBlock {
  std::vector<std::string> checks;
  std::vector<int> levels;  // empty: the domain level only
};

struct ConvergenceBlock {
  std::vector<int> levels = {2, 3, 4};
};

struct ExportBlock {
  bool obj = false;
  bool matrices = false;
  bool solution_csv = true;
};

struct RunConfig {
  Command command = Command::solve_regularity;
  DomainSpec domain;
  Coefficients coeffs;
  DataSpec data;
  bool data_given = false;
  QuadratureOptions quad;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: OpenMP default
  int probes = 64;  // interior probe points for solve commands
  Tolerances tolerances;
  HarmonicMeasureBlock harmonic_measure;
  VerifyBlock verify;
  ConvergenceBlock convergence;
  ExportBlock exports;
  std::string source_text;  // normalized config, echoed into the summary
};

// Throws InputError on malformed text, unknown names or invalid coefficients.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace driftbie
