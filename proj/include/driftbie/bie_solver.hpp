#pragma once

#include "driftbie/boundary_data.hpp"
#include "driftbie/layer_potentials.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

namespace driftbie {

struct SolverOptions {
  QuadratureOptions quad;
  double max_condition = 1e12;
};

// [S; grad_T S] for one coefficient set with a factorized W12 normal matrix.
// Serves R2 for L and D2 for L^t (S* is the weighted transpose of the same matrix).
class SingleLayerSystem {
 public:
  SingleLayerSystem(MeshPtr mesh, const Coefficients& coeffs, const SolverOptions& opts = {});

  const MeshPtr& mesh() const { return mesh_; }
  const Coefficients& coeffs() const { return coeffs_; }
  const SolverOptions& options() const { return opts_; }
  const Mat& S() const { return S_; }
  const Mat& G() const { return G_; }  // 2N x N, frame components of node i in rows 2i, 2i+1
  double condition_estimate() const { return condition_; }

  // Least-squares density for W12 data (values, frame gradient); returns the relative W12 residual.
  Vec solve_w12(const Vec& f, const Grad2& df, double* residual) const;
  // z with (M^T W3 M) z = W f; the Riesz pair of the functional is (S z, G z).
  Vec solve_adjoint(const Vec& f, double* residual) const;
  // Discrete S* = W^{-1} M^T W3 applied to a pair (h, frame gradient part).
  Vec apply_s_star(const Vec& h, const Grad2& g) const;

 private:
  Vec solve_normal(const Vec& rhs) const;

  MeshPtr mesh_;
  Coefficients coeffs_;
  SolverOptions opts_;
  Mat S_, G_;
  Eigen::MatrixXd factor_;  // Cholesky factor of W^{-1/2} M^T W3 M W^{-1/2} (lower)
  Vec wsqrt_;
  double condition_ = 0.0;
};

enum class SolutionKind { regularity, adjoint_dirichlet };

struct Solution {
  SolutionKind kind = SolutionKind::regularity;
  MeshPtr mesh;
  Coefficients coeffs;
  QuadratureOptions quad;
  Vec density;              // g for regularity, h = S z for the adjoint problem
  Grad3 density_gradient;   // adjoint only: gradient part of the Riesz pair
  BoundaryField boundary_data;
  double residual = 0.0;
  double condition_estimate = 0.0;
};

Solution solve_regularity(const SingleLayerSystem& sys, const BoundaryField& f);
Solution solve_regularity(const MeshPtr& mesh, const Coefficients& coeffs, const BoundaryField& f,
                          const SolverOptions& opts = {});
Solution solve_dirichlet_adjoint(const SingleLayerSystem& sys, const BoundaryField& f);
Solution solve_dirichlet_adjoint(const MeshPtr& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                 const SolverOptions& opts = {});

// Points must be strictly interior.
Vec evaluate(const Solution& sol, const std::vector<Vec3>& points);
std::vector<Vec3> gradient_evaluate(const Solution& sol, const std::vector<Vec3>& points);
// Value and gradient in one pass.
void evaluate_with_gradient(const Solution& sol, const std::vector<Vec3>& points, Vec& values,
                            std::vector<Vec3>& gradients);

// Green function of the domain for L: G(x, y) = Gamma(x, y) - w_y(x), L w_y = 0, w_y = Gamma(., y) on the boundary.
class DomainGreen {
 public:
  explicit DomainGreen(std::shared_ptr<const SingleLayerSystem> sys);
  double operator()(const Vec3& x, const Vec3& y) const;
  // Values at many x for one pole.
  Vec values(const std::vector<Vec3>& xs, const Vec3& y) const;
  const SingleLayerSystem& system() const { return *sys_; }
  // Single layer density of the corrector for pole y (cached).
  const Vec& corrector_density(const Vec3& y) const;
  // Minimum pole distance to the boundary, in largest-panel diameters.
  static constexpr double kPoleMargin = 2.0;

 private:
  std::shared_ptr<const SingleLayerSystem> sys_;
  mutable std::map<std::array<double, 3>, Vec> cache_;
  mutable std::mutex mutex_;
};

double domain_green(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x, const Vec3& y,
                    const SolverOptions& opts = {});

struct Symmetrized {
  Coefficients coeffs;  // A_s and b + b_tilde, no affine part
  Vec3 b_tilde = Vec3::Zero();
  double divergence = 0.0;
  double weak_form_residual = 0.0;  // max relative residual over the test pairs
};
// box: region where the weak forms are compared (test functions vanish on its boundary).
Symmetrized symmetrize_operator(const Coefficients& coeffs, const Eigen::AlignedBox3d& box, std::uint64_t seed = 1);
// Relative difference of the two weak forms for one (u, phi) pair; phi must vanish on the box boundary.
double weak_form_residual(const Coefficients& full, const Coefficients& sym, const Eigen::AlignedBox3d& box,
                          const std::function<double(const Vec3&, Vec3*)>& u,
                          const std::function<double(const Vec3&, Vec3*)>& phi, int points_per_axis = 40);

enum class MaximalOf { u, grad_u };
// Per-node sup over cone samples; nodes with empty cones are marked excluded.
BoundaryField nontangential_maximal(const Solution& sol, MaximalOf which, const ConeParams& cone);

// Interior conormal <A grad u, nu> of a regularity solution: nontangential extrapolation of the
// interior gradient; (1/2 + K*) g at nodes whose normal ray leaves the domain.
BoundaryField interior_conormal(const Solution& sol);

}  // namespace driftbie
