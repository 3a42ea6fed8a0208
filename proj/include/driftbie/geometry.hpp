#pragma once

#include "driftbie/common.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace driftbie {

enum class DomainKind { sphere, cube, l_prism, explicit_mesh };

DomainKind parse_domain_kind(const std::string& name);
std::string to_string(DomainKind kind);

struct DomainSpec {
  DomainKind kind = DomainKind::sphere;
  double scale = 1.0;  // sphere radius, cube side, L-prism outer side
  int refinement_level = 0;
  // Extra subdivisions that keep panels flat, so the polyhedron itself does not change.
  int flat_subdivisions = 0;
  // 1: centroid node per panel; 3: symmetric three-point rule.
  int quadrature_order = 1;
  int max_level = 6;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::optional<Vec3> interior_point;
};

struct Panel {
  std::array<Vec3, 3> v;
  Vec3 normal;
  Vec3 t1, t2;
  Vec3 centroid;
  double area = 0.0;
  double diameter = 0.0;
};

class MeshLocator;

class BoundaryMesh {
 public:
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Panel> panels;
  // Panel index of the base polyhedron face each panel was cut from (flat subdivisions only).
  std::vector<int> parent;
  int coarse_panel_count = 0;
  // Panel across edge k (vertices k, k+1) of each face.
  std::vector<std::array<int, 3>> neighbors;

  int nodes_per_panel = 1;
  std::vector<Vec3> nodes;
  std::vector<double> weights;
  std::vector<int> node_panel;

  double total_area = 0.0;
  double diameter = 0.0;
  double r_omega_estimate = 0.0;
  double inradius = 0.0;
  Vec3 interior_point = Vec3::Zero();
  DomainSpec spec;

  int num_panels() const { return static_cast<int>(panels.size()); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  // Largest panel diameter.
  double panel_size() const { return max_panel_diameter_; }
  double mean_panel_size() const;

  // Linear Lagrange basis of a panel's node set, evaluated at y (order 1: the constant 1).
  void basis(int panel, const Vec3& y, double* out) const;

  Eigen::Vector2d to_frame(int node, const Vec3& v) const;
  Vec3 from_frame(int node, const Eigen::Vector2d& w) const;

  const MeshLocator& locator() const { return *locator_; }

  void finalize();

 private:
  double max_panel_diameter_ = 0.0;
  std::shared_ptr<const MeshLocator> locator_;
};

using MeshPtr = std::shared_ptr<const BoundaryMesh>;

MeshPtr build_mesh(const DomainSpec& spec);

// Closest point on triangle (a, b, c) to x. Feature: 0-2 vertex, 3-5 edge (ab, bc, ca), 6 face.
struct ClosestPoint {
  Vec3 point;
  double distance = 0.0;
  int panel = -1;
  int feature = 6;
};
ClosestPoint closest_point_on_triangle(const Vec3& x, const Vec3& a, const Vec3& b, const Vec3& c);

// Distance and inside/outside queries against a closed triangle mesh.
class MeshLocator {
 public:
  explicit MeshLocator(const BoundaryMesh& mesh);

  ClosestPoint closest(const Vec3& x) const;
  // Positive inside.
  double signed_distance(const Vec3& x) const;
  bool inside(const Vec3& x) const { return signed_distance(x) > 0.0; }
  // Cheap lower bound on |distance| with its sign; exact near the surface.
  double clearance(const Vec3& x, bool* is_inside) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end);
  void search(int node, const Vec3& x, ClosestPoint& best) const;
  void gather(int node, const Vec3& x, double radius, std::vector<int>& out) const;
  double sign_at(const Vec3& x, const ClosestPoint& cp) const;
  int cell_index(const Vec3& x) const;

  const BoundaryMesh* mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  std::vector<Vec3> vertex_normals_;
  std::vector<std::array<Vec3, 3>> edge_normals_;

  Vec3 grid_lo_;
  double cell_ = 1.0;
  int n_[3] = {1, 1, 1};
  // Chebyshev cell distance to the nearest surface cell; sign +1 inside, -1 outside.
  std::vector<int> cell_steps_;
  std::vector<signed char> cell_sign_;
  // Near-surface cells: every panel that can be nearest to a point of the cell (CSR layout).
  std::vector<int> cand_start_;
  std::vector<int> cand_;
};

// Indices of panels whose centroid lies within distance r of q, plus panels containing q.
std::vector<int> surface_ball(const BoundaryMesh& mesh, const Vec3& q, double r);

struct CorkscrewPoint {
  Vec3 point;
  double r_used = 0.0;
  bool clamped = false;
  std::string warning;
};

// Module constant: dist(A_r(q), boundary) >= r / c0 and <= c0 * r.
constexpr double kCorkscrewC0 = 3.4641016151377544;

CorkscrewPoint corkscrew_point(const BoundaryMesh& mesh, const Vec3& q, double r);
Vec3 averaged_inward_normal(const BoundaryMesh& mesh, const Vec3& q, double r);

struct Cone {
  Vec3 vertex;
  Vec3 axis;
  double aperture = 0.0;
  double height = 0.0;
  std::vector<Vec3> sample_points;
  int discarded = 0;
};

struct ConeParams {
  double aperture = kPi / 4;
  double height = 0.0;  // <= 0: default from panel size and r_omega
  int n_rays = 8;
  int n_radii = 6;
};

// Aperture constant a with |x - q| <= (1 + a) dist(x, boundary).
double cone_aperture_constant(double aperture);
double default_cone_height(const BoundaryMesh& mesh);

Cone cone_samples(const BoundaryMesh& mesh, const Vec3& q, double aperture, double height, int n_rays,
                  int n_radii);
Cone cone_samples(const BoundaryMesh& mesh, const Vec3& q, const ConeParams& params);

void write_obj(const BoundaryMesh& mesh, const std::string& path);

}  // namespace driftbie
