#pragma once

#include "driftbie/bie_solver.hpp"
#include "driftbie/report.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>

namespace driftbie {

// Philox4x32-10 counter-based generator. One stream per (seed, path); the block counter advances.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // The raw bijection, exposed for known-answer tests.
  static Block apply(Block counter, std::array<std::uint32_t, 2> key);

 private:
  std::array<std::uint32_t, 2> key_;
  Block counter_;
  Block out_{};
  int used_ = 4;
};

struct MeasureParams {
  double step = 0.0;               // h; <= 0 means 1e-3 * mesh diameter
  // Inside the boundary layer (distance < layer_width * h) the step is distance / layer_width, so it
  // shrinks in proportion to the distance; outside it is max(h, far_fraction * distance).
  double layer_width = 5.0;
  double far_fraction = 0.4;
  double min_step_fraction = 0.05; // smallest step inside the layer, in units of h
  long long max_steps = 10'000'000;
  double max_timeout_fraction = 1e-3;
  bool keep_exit_points = false;
};

struct ExitSample {
  int panel = -1;
  Vec3 point = Vec3::Zero();
  long long steps = 0;
  bool timed_out = false;
};

// One path of dX = -b dt + sigma dW, sigma sigma^T = 2A, from x0 until it leaves the domain.
ExitSample sample_exit(const BoundaryMesh& mesh, const Coefficients& coeffs, const Vec3& x0, Philox4x32& rng,
                       const MeasureParams& params = {});

struct MeasureEstimate {
  Vec3 x0 = Vec3::Zero();
  std::vector<long long> counts;  // per panel
  Vec probabilities;
  Vec std_errors;
  long long paths = 0;
  long long exited = 0;
  long long timeouts = 0;
  std::uint64_t seed = 0;
  double step = 0.0;
  double mean_steps = 0.0;
  std::vector<Vec3> exit_points;  // path order; only with keep_exit_points

  // Probability that the exit point satisfies pred (needs exit points).
  double fraction(const std::function<bool(const Vec3&)>& pred, double* std_error = nullptr) const;
  // Mean of f over exit points, or sum_panels f(centroid) p without them.
  double expectation(const BoundaryMesh& mesh, const std::function<double(const Vec3&)>& f,
                     double* std_error = nullptr) const;
};

MeasureEstimate estimate_measure(const BoundaryMesh& mesh, const Coefficients& coeffs, const Vec3& x0, long long N,
                                 std::uint64_t seed, const MeasureParams& params = {});

// Green representation of the harmonic measure density at x0.
struct GreenKernel {
  BoundaryField k;  // d omega^{x0} / d sigma at the nodes
  Vec3 x0 = Vec3::Zero();
  double total = 0.0;  // integral of k
  std::shared_ptr<DomainGreen> adjoint_green;  // Green function of L^t; G(x0, y) = G^t(y, x0)

  // G_Omega(x0, y) for the operator L.
  double green(const Vec3& y) const;
  // Integral of k over each panel, or over each parent panel when coarse is set.
  Vec panel_integrals(bool coarse) const;
};

GreenKernel green_kernel(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x0,
                         const SolverOptions& opts = {});
BoundaryField kernel_via_green(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x0,
                               const SolverOptions& opts = {});

// Pooled mass sum_{nodes in panels} w k.
double measure_of(const BoundaryMesh& mesh, const BoundaryField& k, const std::vector<int>& panels);

// Area, int k and int k^2 over the surface ball |x - q| <= r; panels cut by the sphere are
// resolved by 64 sub-triangles with k interpolated from the panel nodes.
struct BallMoments {
  double area = 0.0, m1 = 0.0, m2 = 0.0;
};
BallMoments ball_moments(const BoundaryMesh& mesh, const BoundaryField& k, const Vec3& q, double r);

enum class StructureCheck { doubling, b2, green_comparison, comparison_principle };
std::string to_string(StructureCheck c);
StructureCheck parse_structure_check(const std::string& name);

struct StructureInputs {
  MeshPtr mesh;
  Coefficients coeffs;
  Vec3 x0 = Vec3::Zero();
  BoundaryField kernel;
  // Needed by green_comparison (G(x0, .)) and comparison_principle (Green of L, built on demand).
  const GreenKernel* green = nullptr;
  std::shared_ptr<DomainGreen> domain_green;
  SolverOptions solver;
  double r_min_panels = 4.0;  // smallest radius in largest-panel diameters
  double r_cap = 0.0;         // > 0: only radii <= r_cap enter the constant
  int centers = 24;
  double ceiling = std::numeric_limits<double>::infinity();
};

// Dyadic radii r_j = r_min 2^j <= r_Omega.
std::vector<double> dyadic_radii(const BoundaryMesh& mesh, double r_min_panels);
// Deterministic spread of boundary centres (panel centroids).
std::vector<Vec3> check_centers(const BoundaryMesh& mesh, int count);
// Corkscrew point at radius 8r on the far side of the domain from q (clamped to r_Omega).
Vec3 far_pole(const BoundaryMesh& mesh, const Vec3& q, double r);
// Interior sample points of T_r(q) kept at least `clearance` away from the boundary.
std::vector<Vec3> tent_samples(const BoundaryMesh& mesh, const Vec3& q, double r, double clearance);

CheckReport measure_structure_checks(StructureInputs& in, StructureCheck check);

// Discrete Hardy-Littlewood maximal function of f over surface balls, measured by k.
Vec hardy_littlewood_maximal(const BoundaryMesh& mesh, const BoundaryField& k, const Vec& f,
                             const std::vector<double>& radii);

}  // namespace driftbie
