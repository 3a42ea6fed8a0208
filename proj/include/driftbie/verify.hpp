#pragma once

#include "driftbie/harmonic_measure.hpp"
#include "driftbie/report.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>

namespace driftbie {

// ---------------------------------------------------------------------------
// interior checks

enum class InteriorCheck { maximum_principle, caccioppoli, harnack, carleson };
std::string to_string(InteriorCheck c);

// A function on the domain: values (and optionally gradients) at interior points.
struct InteriorSubject {
  MeshPtr mesh;
  std::string description;
  std::function<Vec(const std::vector<Vec3>&)> values;
  std::function<std::vector<Vec3>(const std::vector<Vec3>&)> gradients;
  std::optional<std::array<double, 2>> boundary_range;  // [inf f, sup f]
  std::shared_ptr<const DomainGreen> green;             // carleson
};

InteriorSubject subject_of(const Solution& sol);
// u = G(., pole)
InteriorSubject subject_of(std::shared_ptr<const DomainGreen> green, const Vec3& pole);
InteriorSubject constant_subject(MeshPtr mesh, double c);

struct InteriorOptions {
  // Ball family: concentric balls at `center` (default: the interior point) with these radii.
  std::optional<Vec3> center;
  std::vector<double> radii;  // empty: chosen from the inradius
  int lattice = 12;           // maximum-principle sample lattice per axis
  double r_min_panels = 4.0;  // carleson radii
  int centers = 12;           // carleson boundary centres
  double ceiling = std::numeric_limits<double>::infinity();
};

CheckReport interior_checks(const InteriorSubject& u, InteriorCheck check, const InteriorOptions& opts = {});

// Integrals over a ball (optionally clipped to the domain) by a spherical tensor rule.
struct BallRule {
  std::vector<Vec3> points;
  std::vector<double> weights;
};
BallRule ball_rule(const Vec3& center, double radius, int n_radial = 8, int n_polar = 8, int n_azimuth = 16);

// ---------------------------------------------------------------------------
// boundary checks

enum class BoundaryCheck { rellich_global, rellich_local, rellich_local_adjoint, u_by_gradient, jump };
std::string to_string(BoundaryCheck c);

struct BoundaryCheckOptions {
  LayerOptions layer;
  ConeParams cone;            // u-by-gradient cone (height is epsilon)
  double r_min_panels = 4.0;  // local Rellich radii
  int centers = 12;
  double ceiling = std::numeric_limits<double>::infinity();
};

// Regularity solutions u = S g of L (or of L^t for rellich_local_adjoint: pass solutions built with
// coeffs.adjoint()). rellich_* need symmetric A; jump needs no solutions, only the densities.
CheckReport boundary_checks(const std::vector<Solution>& solutions, BoundaryCheck check,
                            const BoundaryCheckOptions& opts = {});

// Relative L2 residual of (interior - exterior) conormal of S f against f, maximized over the family.
CheckReport jump_check(const MeshPtr& mesh, const Coefficients& coeffs, const std::vector<DataSpec>& family,
                       const BoundaryCheckOptions& opts = {});


// ---------------------------------------------------------------------------
// kernel checks

enum class KernelCheck { defining_property, symmetry, bounds, perturbation };
std::string to_string(KernelCheck c);

struct GaussianBump {
  Vec3 center = Vec3::Zero();
  double width = 0.4;
};

struct KernelCheckOptions {
  Vec3 pole = Vec3::Zero();
  std::vector<GaussianBump> bumps;  // empty: five bumps around the pole
  int pairs = 1000;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;  // defining property residual
  double ceiling = std::numeric_limits<double>::infinity();
};

// Weak form int (A grad_x Gamma . grad phi + b . grad_x Gamma phi) dx by adaptive spherical quadrature
// around y; returns the converged value, throws NumericalError if refinements disagree by > 1e-3.
double kernel_weak_form(const Coefficients& coeffs, const Vec3& y, const GaussianBump& phi, int* refinements = nullptr);

CheckReport kernel_checks(const Coefficients& coeffs, KernelCheck check, const KernelCheckOptions& opts = {});

// ---------------------------------------------------------------------------
// reporting

// Runs make(level) for each level and stores the primary constants as the trend of the last report.
CheckReport refinement_trend(const std::function<CheckReport(int)>& make, const std::vector<int>& levels);

// id,constant,ceiling,pass,levels
void write_reports_csv(const std::vector<CheckReport>& reports, std::ostream& os);
std::string format_number(double v);

}  // namespace driftbie
