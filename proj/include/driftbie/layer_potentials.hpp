#pragma once

#include "driftbie/geometry.hpp"
#include "driftbie/kernels.hpp"
#include "driftbie/panel_integration.hpp"

#include <optional>
#include <string>
#include <vector>

namespace driftbie {

using Grad2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Grad3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Sampled boundary function: nodal values and optional tangential gradient in the panel frames.
struct BoundaryField {
  MeshPtr mesh;
  Vec values;
  std::optional<Grad2> tangential_gradient;
  // Nodes excluded from norms (for instance offsets that left the domain).
  std::vector<char> excluded;

  BoundaryField() = default;
  BoundaryField(MeshPtr m, Vec v);
  BoundaryField(MeshPtr m, Vec v, Grad2 g);

  int size() const { return static_cast<int>(values.size()); }
  bool has_gradient() const { return tangential_gradient.has_value(); }
  void check() const;

  double l2_norm() const;
  double l2_inner(const BoundaryField& o) const;
  double w12_norm() const;
  double w12_inner(const BoundaryField& o) const;
  // Tangential gradient as 3-vectors.
  Grad3 gradient3() const;
};

// Project 3-vectors per node onto the panel frames.
Grad2 to_frame(const BoundaryMesh& mesh, const Grad3& g);
Grad3 from_frame(const BoundaryMesh& mesh, const Grad2& g);

enum class Space { L2, W12, Wm12 };
std::string to_string(Space s);

enum class Side { interior, exterior };

struct DiscreteOperator {
  Mat matrix;
  Space domain_space = Space::L2;
  Space range_space = Space::L2;
  int quadrature_order = 1;
  SingularRule singular_rule = SingularRule::kernel_split;

  // Row-major float64 body after a fixed header (magic, dims, spaces, quadrature metadata).
  void save(const std::string& path) const;
  static DiscreteOperator load(const std::string& path);
};

struct LayerOptions {
  QuadratureOptions quad;
  // One-sided offsets as fractions of the panel diameter, largest first (ratio 2 between them).
  std::array<double, 3> offsets = {0.125, 0.0625, 0.03125};
};

// Boundary matrices for one coefficient set, assembled in one pass.
// S: N x N values, G: 2N x N tangential gradient (frame components of node i in rows 2i, 2i+1),
// K: N x N principal-value conormal, D: 3 matrices N x N with the Cartesian PV gradient.
struct BoundaryMatrices {
  Mat S, G, K;
  std::array<Mat, 3> D;
};
struct AssemblyFlags {
  bool value = true;
  bool tangential = false;
  bool conormal = false;
  bool gradient3 = false;
};
BoundaryMatrices assemble_boundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const QuadratureOptions& quad,
                                   const AssemblyFlags& flags);

DiscreteOperator single_layer_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                       const QuadratureOptions& quad = {});
// [S; grad_T S] as an L2 -> W12 map (values first, then interleaved frame components).
DiscreteOperator single_layer_w12_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                           const QuadratureOptions& quad = {});
DiscreteOperator conormal_pv_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                      const QuadratureOptions& quad = {});
DiscreteOperator adjoint_single_layer_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                               const QuadratureOptions& quad = {});
// W^{-1} S^T W for a given S.
Mat weight_conjugated_transpose(const BoundaryMesh& mesh, const Mat& S);
// S* through the boundary formula with kernel Gamma^t: N x 3N acting on (h; frame gradient of h).
DiscreteOperator s_star_formula_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                         const QuadratureOptions& quad = {});
// S* as the L2 adjoint of the discrete [S; grad_T S] with quadrature weights: W^{-1} M^T W3.
DiscreteOperator s_star_adjoint_operator(const BoundaryMesh& mesh, const DiscreteOperator& s_w12);

BoundaryField single_layer_boundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                    const QuadratureOptions& quad = {});
double single_layer_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                const Vec3& x, const QuadratureOptions& quad = {});
Grad2 tangential_gradient_S(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                            const QuadratureOptions& quad = {});
// Several densities at once (columns of F); result rows follow the node order.
Mat conormal_onesided(const BoundaryMesh& mesh, const Coefficients& coeffs, const Mat& F, Side side,
                      const LayerOptions& opts, std::vector<char>* flagged);
BoundaryField conormal_onesided(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f, Side side,
                                const LayerOptions& opts = {});
BoundaryField conormal_pv(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                          const QuadratureOptions& quad = {});
BoundaryField adjoint_single_layer(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                   const QuadratureOptions& quad = {});
double adjoint_single_layer_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                        const Vec3& x, const QuadratureOptions& quad = {});

// How an element of W^{-1,2} is handed to S*.
enum class Functional {
  riesz,  // Riesz representative h with its tangential gradient
  e2      // pairing with an L2 function h (no gradient part)
};
BoundaryField adjoint_potential_S_star(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& H,
                                       Functional kind, const QuadratureOptions& quad = {});
double adjoint_potential_S_star_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                            const BoundaryField& H, Functional kind, const Vec3& x,
                                            const QuadratureOptions& quad = {});

// Off-boundary potential evaluator: value and gradient of the single layer with the given kernel
// for several densities, and of the S*_+ representation.
class PotentialEvaluator {
 public:
  PotentialEvaluator(const BoundaryMesh& mesh, const Coefficients& coeffs, const QuadratureOptions& quad = {});

  // Returns values (m) and, if grads != nullptr, gradients (m x 3) for densities F (N x m).
  Vec single_layer(const Vec3& x, const Mat& F, Mat* grads) const;
  // S*_+ of the pair (h, grad3 h): u(x) = sum int Gamma(x,q) h - int grad_x Gamma(x,q) . g.
  double pair_potential(const Vec3& x, const Vec& h, const Grad3& g, Vec3* grad) const;
  // Hessian integrals are numeric; used for gradients of pair potentials.
  const PanelIntegrator& integrator() const { return integ_; }

 private:
  void panel_hessian(const Vec3& x, int j, std::array<Mat3, kMaxBasis>& H) const;
  const BoundaryMesh* mesh_;
  PanelIntegrator integ_;
};

// Distance-based check used to reject targets on or outside the boundary.
bool strictly_interior(const BoundaryMesh& mesh, const Vec3& x, double margin = 0.0);

}  // namespace driftbie
