#pragma once

#include "driftbie/geometry.hpp"
#include "driftbie/kernels.hpp"

#include <array>

namespace driftbie {

enum class SingularRule { duffy, kernel_split };

std::string to_string(SingularRule rule);
SingularRule parse_singular_rule(const std::string& name);

// Which one-sided limit to take for a target lying in the panel plane.
enum class Limit { pv, plus, minus };  // plus: the side the normal points to

struct QuadratureOptions {
  SingularRule rule = SingularRule::kernel_split;
  double far_ratio = 6.0;  // centroid distance / panel diameter beyond which far_degree is used
  double mid_ratio = 2.5;  // beyond which mid_degree is used; closer panels get near-field treatment
  int far_degree = 2;
  int mid_degree = 5;
  int duffy_points = 12;
  double adapt_eta = 2.0;
  int adapt_max_depth = 14;
  // Order-1 meshes: integrate a per-panel linear reconstruction of the nodal density
  // (gradient fitted to the edge neighbours) instead of the piecewise constant.
  bool reconstruct = true;
};

// Integral of 1/|x - y| over the flat triangle v and its x-gradient.
// For x in the triangle plane the normal component is the limit selected by `limit`.
struct TriangleLaplace {
  double potential = 0.0;
  Vec3 gradient = Vec3::Zero();
};
TriangleLaplace laplace_triangle(const Vec3& x, const std::array<Vec3, 3>& v, Limit limit = Limit::pv);

constexpr int kMaxBasis = 3;

// Per-panel integrals of the kernel against the panel's basis functions.
struct PanelResult {
  std::array<double, kMaxBasis> value{};
  std::array<Vec3, kMaxBasis> gradient;
  PanelResult() {
    for (auto& g : gradient) g.setZero();
  }
};

// Density on a panel as a combination of nodal values: sum_c value[col[c]] * sum_a coef[c][a] L_a.
constexpr int kMaxColumns = 4;
struct PanelColumns {
  int n = 0;
  std::array<int, kMaxColumns> col{};
  std::array<std::array<double, kMaxBasis>, kMaxColumns> coef{};
};

// Panel integrals attributed to nodal columns.
struct ColumnResult {
  int n = 0;
  std::array<int, kMaxColumns> col{};
  std::array<double, kMaxColumns> value{};
  std::array<Vec3, kMaxColumns> gradient;
  ColumnResult() {
    for (auto& g : gradient) g.setZero();
  }
};

class PanelIntegrator {
 public:
  PanelIntegrator(const BoundaryMesh& mesh, const Coefficients& coeffs, const QuadratureOptions& opts);

  // x on panel j (a node of it) when on_panel is set; the gradient is then the limit `limit`.
  PanelResult integrate(const Vec3& x, int j, bool on_panel, bool want_gradient, Limit limit = Limit::pv) const;

  // Drift-free part with the density frozen to the panel basis at the foot point of x; exact.
  PanelResult analytic_part(const Vec3& x, int j, Limit limit) const;

  ColumnResult to_columns(const PanelResult& r, int j) const;
  ColumnResult integrate_columns(const Vec3& x, int j, bool on_panel, bool want_gradient,
                                 Limit limit = Limit::pv) const {
    return to_columns(integrate(x, j, on_panel, want_gradient, limit), j);
  }
  const PanelColumns& columns(int j) const { return columns_[j]; }
  // Basis functions integrated on each panel (1 or 3) and their values at y.
  int basis_count() const { return nb_; }
  void basis(int j, const Vec3& y, double* out) const;

  const BoundaryMesh& mesh() const { return *mesh_; }
  const Kernel& kernel() const { return kernel_; }
  const QuadratureOptions& options() const { return opts_; }

 private:
  void rule_sum(const Vec3& x, int j, int degree, bool want_gradient, PanelResult& out) const;
  void near_numeric(const Vec3& x, int j, bool want_gradient, bool split, const Vec3& foot, PanelResult& out) const;
  void duffy_self(const Vec3& x, int j, bool want_gradient, bool split, PanelResult& out) const;
  Vec3 foot_point(const Vec3& x, int j) const;

  const BoundaryMesh* mesh_;
  Kernel kernel_;
  QuadratureOptions opts_;
  int nb_;
  std::vector<std::array<Vec3, 3>> tilde_;
  std::vector<double> jacobian_;
  std::vector<PanelColumns> columns_;
};

}  // namespace driftbie
