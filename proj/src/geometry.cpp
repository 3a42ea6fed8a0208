#include "driftbie/geometry.hpp"

#include "driftbie/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace driftbie {

DomainKind parse_domain_kind(const std::string& name) {
  if (name == "sphere" || name == "sphere-approximation") return DomainKind::sphere;
  if (name == "cube") return DomainKind::cube;
  if (name == "l-prism" || name == "l_prism" || name == "L-shaped prism") return DomainKind::l_prism;
  if (name == "explicit") return DomainKind::explicit_mesh;
  throw InputError("unknown domain kind '" + name + "'");
}

std::string to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::sphere:
      return "sphere";
    case DomainKind::cube:
      return "cube";
    case DomainKind::l_prism:
      return "l-prism";
    case DomainKind::explicit_mesh:
      return "explicit";
  }
  return "?";
}

namespace {

using Face = std::array<int, 3>;

struct RawMesh {
  std::vector<Vec3> v;
  std::vector<Face> f;
};

RawMesh icosahedron() {
  RawMesh m;
  const double z = 1.0 / std::sqrt(5.0);
  const double rho = 2.0 / std::sqrt(5.0);
  m.v.push_back(Vec3(0, 0, 1));
  for (int k = 0; k < 5; ++k) {
    const double a = 2 * kPi * k / 5;
    m.v.push_back(Vec3(rho * std::cos(a), rho * std::sin(a), z));
  }
  for (int k = 0; k < 5; ++k) {
    const double a = 2 * kPi * k / 5 + kPi / 5;
    m.v.push_back(Vec3(rho * std::cos(a), rho * std::sin(a), -z));
  }
  m.v.push_back(Vec3(0, 0, -1));
  auto up = [](int k) { return 1 + (k % 5); };
  auto lo = [](int k) { return 6 + (k % 5); };
  for (int k = 0; k < 5; ++k) {
    m.f.push_back({0, up(k), up(k + 1)});
    m.f.push_back({up(k), lo(k), up(k + 1)});
    m.f.push_back({up(k + 1), lo(k), lo(k + 1)});
    m.f.push_back({11, lo(k + 1), lo(k)});
  }
  return m;
}

// Boundary of a union of unit voxels, two triangles per exposed face.
RawMesh voxel_surface(const std::vector<std::array<int, 3>>& voxels, double unit) {
  std::set<std::array<int, 3>> occupied(voxels.begin(), voxels.end());
  std::map<std::array<int, 3>, int> index;
  RawMesh m;
  auto vid = [&](std::array<int, 3> g) {
    auto it = index.find(g);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(m.v.size());
    index[g] = id;
    m.v.push_back(Vec3(g[0], g[1], g[2]) * unit);
    return id;
  };
  for (const auto& vox : voxels) {
    for (int axis = 0; axis < 3; ++axis) {
      for (int dir = -1; dir <= 1; dir += 2) {
        auto nb = vox;
        nb[axis] += dir;
        if (occupied.count(nb)) continue;
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        std::array<int, 3> base = vox;
        if (dir > 0) base[axis] += 1;
        std::array<std::array<int, 3>, 4> q;
        for (int c = 0; c < 4; ++c) {
          q[c] = base;
          q[c][a1] += (c == 1 || c == 2) ? 1 : 0;
          q[c][a2] += (c >= 2) ? 1 : 0;
        }
        // (a1, a2, axis) is right handed, so counter-clockwise in (a1, a2) points along +axis.
        int i0 = vid(q[0]), i1 = vid(q[1]), i2 = vid(q[2]), i3 = vid(q[3]);
        if (dir > 0) {
          m.f.push_back({i0, i1, i2});
          m.f.push_back({i0, i2, i3});
        } else {
          m.f.push_back({i0, i2, i1});
          m.f.push_back({i0, i3, i2});
        }
      }
    }
  }
  return m;
}

void check_manifold(const RawMesh& m) {
  const int nv = static_cast<int>(m.v.size());
  std::map<std::pair<int, int>, int> directed;
  for (size_t fi = 0; fi < m.f.size(); ++fi) {
    const auto& f = m.f[fi];
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= nv) throw InputError("face " + std::to_string(fi) + " references a missing vertex");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw InputError("face " + std::to_string(fi) + " repeats a vertex");
    const double area = 0.5 * (m.v[f[1]] - m.v[f[0]]).cross(m.v[f[2]] - m.v[f[0]]).norm();
    if (!(area > 0)) throw InputError("face " + std::to_string(fi) + " is degenerate");
    for (int k = 0; k < 3; ++k) {
      auto e = std::make_pair(f[k], f[(k + 1) % 3]);
      if (++directed[e] > 1)
        throw InputError("non-manifold face list: directed edge (" + std::to_string(e.first) + "," +
                         std::to_string(e.second) + ") used twice or orientation inconsistent");
    }
  }
  for (const auto& [e, count] : directed) {
    if (!directed.count({e.second, e.first}))
      throw InputError("non-manifold face list: edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                       ") has no opposite face (surface not closed)");
  }
}

double signed_volume(const RawMesh& m) {
  double vol = 0.0;
  for (const auto& f : m.f) vol += m.v[f[0]].dot(m.v[f[1]].cross(m.v[f[2]])) / 6.0;
  return vol;
}

RawMesh subdivide(const RawMesh& in, bool project, double radius, std::vector<int>* parent_map) {
  RawMesh out;
  out.v = in.v;
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = mid.find({key.first, key.second});
    if (it != mid.end()) return it->second;
    Vec3 p = 0.5 * (in.v[a] + in.v[b]);
    if (project) p *= radius / p.norm();
    const int id = static_cast<int>(out.v.size());
    out.v.push_back(p);
    mid[{key.first, key.second}] = id;
    return id;
  };
  std::vector<int> new_parent;
  for (size_t fi = 0; fi < in.f.size(); ++fi) {
    const auto& f = in.f[fi];
    const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
    out.f.push_back({f[0], a, c});
    out.f.push_back({a, f[1], b});
    out.f.push_back({c, b, f[2]});
    out.f.push_back({a, b, c});
    if (parent_map) {
      for (int k = 0; k < 4; ++k) new_parent.push_back((*parent_map)[fi]);
    }
  }
  if (parent_map) *parent_map = std::move(new_parent);
  return out;
}

double estimate_diameter(const std::vector<Vec3>& v) {
  if (v.size() < 2) return 0.0;
  if (v.size() <= 4000) {
    double d = 0.0;
    for (size_t i = 0; i < v.size(); ++i)
      for (size_t j = i + 1; j < v.size(); ++j) d = std::max(d, (v[i] - v[j]).squaredNorm());
    return std::sqrt(d);
  }
  // double sweep
  size_t a = 0;
  double best = 0.0;
  for (int sweep = 0; sweep < 3; ++sweep) {
    size_t far = a;
    for (size_t i = 0; i < v.size(); ++i) {
      const double d = (v[i] - v[a]).norm();
      if (d > best) {
        best = d;
        far = i;
      }
    }
    a = far;
  }
  return best;
}

// Smallest patch radius over which panel normals stay within 60 degrees of the patch mean normal.
double estimate_r_omega(const BoundaryMesh& m) {
  const int n = m.num_panels();
  const int samples = std::min(n, 384);
  double r_min = m.diameter / 2;
  std::vector<std::pair<double, int>> order(n);
  for (int s = 0; s < samples; ++s) {
    const int p = static_cast<int>((static_cast<long long>(s) * n) / samples);
    const Vec3& q = m.panels[p].centroid;
    for (int j = 0; j < n; ++j) order[j] = {(m.panels[j].centroid - q).norm(), j};
    std::sort(order.begin(), order.end());
    auto passes = [&](int k) {
      Vec3 d = Vec3::Zero();
      for (int i = 0; i < k; ++i) d += m.panels[order[i].second].area * m.panels[order[i].second].normal;
      if (d.norm() == 0.0) return false;
      d.normalize();
      for (int i = 0; i < k; ++i)
        if (m.panels[order[i].second].normal.dot(d) < 0.5) return false;
      return true;
    };
    int lo = 1, hi = n;
    if (passes(n)) continue;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (passes(mid))
        lo = mid;
      else
        hi = mid;
    }
    r_min = std::min(r_min, order[hi - 1].first);
  }
  return r_min;
}

}  // namespace

double BoundaryMesh::mean_panel_size() const {
  double s = 0.0;
  for (const auto& p : panels) s += p.diameter;
  return panels.empty() ? 0.0 : s / panels.size();
}

void BoundaryMesh::basis(int panel, const Vec3& y, double* out) const {
  if (nodes_per_panel == 1) {
    out[0] = 1.0;
    return;
  }
  const Panel& p = panels[panel];
  const Vec3 e1 = p.v[1] - p.v[0], e2 = p.v[2] - p.v[0], d = y - p.v[0];
  const double a = e1.dot(e1), b = e1.dot(e2), c = e2.dot(e2);
  const double r1 = d.dot(e1), r2 = d.dot(e2), det = a * c - b * b;
  const double l1 = (c * r1 - b * r2) / det, l2 = (a * r2 - b * r1) / det;
  const double lam[3] = {1.0 - l1 - l2, l1, l2};
  for (int k = 0; k < 3; ++k) out[k] = 2.0 * lam[k] - 1.0 / 3.0;
}

Eigen::Vector2d BoundaryMesh::to_frame(int node, const Vec3& v) const {
  const Panel& p = panels[node_panel[node]];
  return Eigen::Vector2d(v.dot(p.t1), v.dot(p.t2));
}

Vec3 BoundaryMesh::from_frame(int node, const Eigen::Vector2d& w) const {
  const Panel& p = panels[node_panel[node]];
  return w[0] * p.t1 + w[1] * p.t2;
}

void BoundaryMesh::finalize() {
  panels.clear();
  max_panel_diameter_ = 0.0;
  total_area = 0.0;
  for (const auto& f : faces) {
    Panel p;
    for (int k = 0; k < 3; ++k) p.v[k] = vertices[f[k]];
    const Vec3 cr = (p.v[1] - p.v[0]).cross(p.v[2] - p.v[0]);
    p.area = 0.5 * cr.norm();
    p.normal = cr.normalized();
    p.t1 = (p.v[1] - p.v[0]).normalized();
    p.t2 = p.normal.cross(p.t1);
    p.centroid = (p.v[0] + p.v[1] + p.v[2]) / 3.0;
    p.diameter = std::max({(p.v[1] - p.v[0]).norm(), (p.v[2] - p.v[1]).norm(), (p.v[0] - p.v[2]).norm()});
    max_panel_diameter_ = std::max(max_panel_diameter_, p.diameter);
    panels.push_back(p);
  }
  {
    std::map<std::pair<int, int>, int> owner;
    for (int j = 0; j < num_panels(); ++j)
      for (int k = 0; k < 3; ++k) owner[{faces[j][k], faces[j][(k + 1) % 3]}] = j;
    neighbors.assign(num_panels(), {-1, -1, -1});
    for (int j = 0; j < num_panels(); ++j)
      for (int k = 0; k < 3; ++k) {
        auto it = owner.find({faces[j][(k + 1) % 3], faces[j][k]});
        if (it != owner.end()) neighbors[j][k] = it->second;
      }
  }
  nodes.clear();
  weights.clear();
  node_panel.clear();
  const TriangleRule& rule = triangle_rule(nodes_per_panel == 1 ? 1 : 2);
  for (int j = 0; j < num_panels(); ++j) {
    const Panel& p = panels[j];
    for (size_t k = 0; k < rule.bary.size(); ++k) {
      const auto& l = rule.bary[k];
      nodes.push_back(l[0] * p.v[0] + l[1] * p.v[1] + l[2] * p.v[2]);
      weights.push_back(rule.weight[k] * p.area);
      node_panel.push_back(j);
    }
  }
  // Pairwise summation keeps sum(weights) within 1e-12 of the panel-area total.
  std::vector<double> areas;
  for (const auto& p : panels) areas.push_back(p.area);
  total_area = std::accumulate(areas.begin(), areas.end(), 0.0);
  diameter = estimate_diameter(vertices);
  locator_ = std::make_shared<const MeshLocator>(*this);
  r_omega_estimate = estimate_r_omega(*this);
  inradius = std::abs(locator_->signed_distance(interior_point));
}

MeshPtr build_mesh(const DomainSpec& spec) {
  if (spec.refinement_level < 0) throw InputError("refinement level must be nonnegative");
  if (spec.refinement_level + spec.flat_subdivisions > spec.max_level)
    throw InputError("refinement level " + std::to_string(spec.refinement_level + spec.flat_subdivisions) +
                     " exceeds the configured maximum " + std::to_string(spec.max_level));
  if (!(spec.scale > 0)) throw InputError("domain scale must be positive");
  if (spec.quadrature_order != 1 && spec.quadrature_order != 3)
    throw InputError("quadrature order must be 1 or 3");

  RawMesh raw;
  Vec3 interior = Vec3::Zero();
  bool project = false;
  switch (spec.kind) {
    case DomainKind::sphere:
      raw = icosahedron();
      for (auto& v : raw.v) v *= spec.scale;
      project = true;
      break;
    case DomainKind::cube:
      raw = voxel_surface({{0, 0, 0}}, spec.scale);
      for (auto& v : raw.v) v -= Vec3::Constant(0.5 * spec.scale);
      break;
    case DomainKind::l_prism: {
      const double u = 0.5 * spec.scale;
      raw = voxel_surface({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, u);
      for (auto& v : raw.v) v -= Vec3(0.5 * u, 0.5 * u, 0.5 * u);
      break;
    }
    case DomainKind::explicit_mesh:
      raw.v = spec.vertices;
      raw.f = spec.faces;
      if (raw.f.size() < 4) throw InputError("explicit mesh needs at least 4 faces");
      for (auto& v : raw.v) v *= spec.scale;
      break;
  }
  check_manifold(raw);
  if (signed_volume(raw) < 0) {
    for (auto& f : raw.f) std::swap(f[1], f[2]);
  }
  if (spec.kind == DomainKind::explicit_mesh) {
    if (spec.interior_point) {
      interior = *spec.interior_point * spec.scale;
    } else {
      // volume centroid
      double vol = 0.0;
      Vec3 c = Vec3::Zero();
      for (const auto& f : raw.f) {
        const double v6 = raw.v[f[0]].dot(raw.v[f[1]].cross(raw.v[f[2]]));
        vol += v6;
        c += v6 * (raw.v[f[0]] + raw.v[f[1]] + raw.v[f[2]]) / 4.0;
      }
      interior = c / vol;
    }
  }
  if (spec.interior_point && spec.kind != DomainKind::explicit_mesh) interior = *spec.interior_point;

  std::vector<int> parent(raw.f.size());
  std::iota(parent.begin(), parent.end(), 0);
  const int coarse = static_cast<int>(raw.f.size());
  for (int l = 0; l < spec.refinement_level; ++l) {
    raw = subdivide(raw, project, spec.scale, &parent);
    std::iota(parent.begin(), parent.end(), 0);
  }
  const int coarse_after_projection = static_cast<int>(raw.f.size());
  for (int l = 0; l < spec.flat_subdivisions; ++l) raw = subdivide(raw, false, spec.scale, &parent);
  (void)coarse;

  auto mesh = std::make_shared<BoundaryMesh>();
  mesh->vertices = std::move(raw.v);
  mesh->faces = std::move(raw.f);
  mesh->parent = std::move(parent);
  mesh->coarse_panel_count = coarse_after_projection;
  mesh->nodes_per_panel = spec.quadrature_order == 1 ? 1 : 3;
  mesh->interior_point = interior;
  mesh->spec = spec;
  mesh->finalize();

  // Star-shapedness: the interior point must lie on the inner side of every face plane.
  for (int j = 0; j < mesh->num_panels(); ++j) {
    const Panel& p = mesh->panels[j];
    if ((p.v[0] - interior).dot(p.normal) <= 0.0)
      throw InputError("domain is not star-shaped with respect to its interior point (face " + std::to_string(j) +
                       ")");
  }
  return mesh;
}

ClosestPoint closest_point_on_triangle(const Vec3& x, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection 5.1.5, with feature tracking.
  ClosestPoint r;
  const Vec3 ab = b - a, ac = c - a, ap = x - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  auto done = [&](const Vec3& p, int feature) {
    r.point = p;
    r.feature = feature;
    r.distance = (x - p).norm();
    return r;
  };
  if (d1 <= 0 && d2 <= 0) return done(a, 0);
  const Vec3 bp = x - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return done(b, 1);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return done(a + d1 / (d1 - d3) * ab, 3);
  const Vec3 cp = x - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return done(c, 2);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return done(a + d2 / (d2 - d6) * ac, 5);
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return done(b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b), 4);
  const double denom = 1.0 / (va + vb + vc);
  return done(a + ab * (vb * denom) + ac * (vc * denom), 6);
}

MeshLocator::MeshLocator(const BoundaryMesh& mesh) : mesh_(&mesh) {
  const int n = mesh.num_panels();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * n);
  build(0, n);

  // angle-weighted vertex pseudonormals, edge pseudonormals
  vertex_normals_.assign(mesh.vertices.size(), Vec3::Zero());
  std::map<std::pair<int, int>, Vec3> edge_sum;
  for (int j = 0; j < n; ++j) {
    const auto& f = mesh.faces[j];
    const Vec3& nrm = mesh.panels[j].normal;
    for (int k = 0; k < 3; ++k) {
      const Vec3 e1 = (mesh.vertices[f[(k + 1) % 3]] - mesh.vertices[f[k]]).normalized();
      const Vec3 e2 = (mesh.vertices[f[(k + 2) % 3]] - mesh.vertices[f[k]]).normalized();
      vertex_normals_[f[k]] += std::acos(std::clamp(e1.dot(e2), -1.0, 1.0)) * nrm;
      auto key = std::minmax(f[k], f[(k + 1) % 3]);
      edge_sum[{key.first, key.second}] += nrm;
    }
  }
  edge_normals_.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto& f = mesh.faces[j];
    // edge order matches closest_point_on_triangle features: ab, bc, ca
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(f[k], f[(k + 1) % 3]);
      edge_normals_[j][k] = edge_sum[{key.first, key.second}];
    }
  }

  // coarse cell grid for cheap clearance bounds
  Eigen::AlignedBox3d box;
  for (const auto& v : mesh.vertices) box.extend(v);
  const double diam = (box.max() - box.min()).norm();
  cell_ = diam / 48.0;
  grid_lo_ = box.min() - Vec3::Constant(2.0 * cell_);
  for (int a = 0; a < 3; ++a) n_[a] = static_cast<int>(std::ceil((box.max()[a] - box.min()[a]) / cell_)) + 4;
  const size_t ncell = static_cast<size_t>(n_[0]) * n_[1] * n_[2];
  cell_steps_.assign(ncell, -1);
  cell_sign_.assign(ncell, 0);
  auto idx = [&](int i, int j, int k) { return (static_cast<size_t>(k) * n_[1] + j) * n_[0] + i; };
  const double half_diag = 0.5 * std::sqrt(3.0) * cell_;
  std::deque<std::array<int, 3>> queue;
  for (int p = 0; p < n; ++p) {
    const Panel& pan = mesh.panels[p];
    Eigen::AlignedBox3d tb;
    for (const auto& v : pan.v) tb.extend(v);
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor((tb.min()[a] - grid_lo_[a]) / cell_)) - 1);
      hi[a] = std::min(n_[a] - 1, static_cast<int>(std::floor((tb.max()[a] - grid_lo_[a]) / cell_)) + 1);
    }
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const size_t c = idx(i, j, k);
          if (cell_steps_[c] == 0) continue;
          const Vec3 center = grid_lo_ + cell_ * Vec3(i + 0.5, j + 0.5, k + 0.5);
          if (closest_point_on_triangle(center, pan.v[0], pan.v[1], pan.v[2]).distance <= half_diag * 1.0001) {
            cell_steps_[c] = 0;
            queue.push_back({i, j, k});
          }
        }
  }
  // Chebyshev distance transform (26-neighbour BFS)
  while (!queue.empty()) {
    auto [i, j, k] = queue.front();
    queue.pop_front();
    const int s = cell_steps_[idx(i, j, k)];
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int a = i + di, b = j + dj, c = k + dk;
          if (a < 0 || b < 0 || c < 0 || a >= n_[0] || b >= n_[1] || c >= n_[2]) continue;
          const size_t id = idx(a, b, c);
          if (cell_steps_[id] >= 0) continue;
          cell_steps_[id] = s + 1;
          queue.push_back({a, b, c});
        }
  }
  // flood fill the outside through non-surface cells (face-connected)
  std::vector<std::array<int, 3>> stack = {{0, 0, 0}};
  cell_sign_[idx(0, 0, 0)] = -1;
  while (!stack.empty()) {
    auto [i, j, k] = stack.back();
    stack.pop_back();
    const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (auto& d : nb) {
      const int a = i + d[0], b = j + d[1], c = k + d[2];
      if (a < 0 || b < 0 || c < 0 || a >= n_[0] || b >= n_[1] || c >= n_[2]) continue;
      const size_t id = idx(a, b, c);
      if (cell_sign_[id] != 0 || cell_steps_[id] == 0) continue;
      cell_sign_[id] = -1;
      stack.push_back({a, b, c});
    }
  }
  for (size_t c = 0; c < ncell; ++c)
    if (cell_steps_[c] > 0 && cell_sign_[c] == 0) cell_sign_[c] = 1;

  // candidate lists: a panel nearest to some point of the cell lies within d(centre) + 2 half diagonals
  cand_start_.assign(ncell + 1, 0);
  std::vector<int> found;
  for (size_t c = 0; c < ncell; ++c) {
    cand_start_[c] = static_cast<int>(cand_.size());
    if (cell_steps_[c] > 1) continue;
    const int i = static_cast<int>(c % n_[0]), j = static_cast<int>((c / n_[0]) % n_[1]),
              k = static_cast<int>(c / (static_cast<size_t>(n_[0]) * n_[1]));
    const Vec3 center = grid_lo_ + cell_ * Vec3(i + 0.5, j + 0.5, k + 0.5);
    ClosestPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    search(0, center, best);
    found.clear();
    gather(0, center, best.distance + 2.0 * half_diag * (1 + 1e-9), found);
    std::sort(found.begin(), found.end());
    cand_.insert(cand_.end(), found.begin(), found.end());
  }
  cand_start_[ncell] = static_cast<int>(cand_.size());
}

int MeshLocator::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  Eigen::AlignedBox3d box, cbox;
  for (int i = begin; i < end; ++i) {
    for (const auto& v : mesh_->panels[order_[i]].v) box.extend(v);
    cbox.extend(mesh_->panels[order_[i]].centroid);
  }
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4) return id;
  int axis;
  (cbox.max() - cbox.min()).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    return mesh_->panels[a].centroid[axis] < mesh_->panels[b].centroid[axis];
  });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

void MeshLocator::search(int node, const Vec3& x, ClosestPoint& best) const {
  const Node& nd = nodes_[node];
  if (nd.left < 0) {
    for (int i = nd.begin; i < nd.end; ++i) {
      const int p = order_[i];
      const auto& v = mesh_->panels[p].v;
      ClosestPoint cp = closest_point_on_triangle(x, v[0], v[1], v[2]);
      if (cp.distance < best.distance) {
        best = cp;
        best.panel = p;
      }
    }
    return;
  }
  const double dl = nodes_[nd.left].box.squaredExteriorDistance(x);
  const double dr = nodes_[nd.right].box.squaredExteriorDistance(x);
  const double b2 = best.distance * best.distance;
  if (dl <= dr) {
    if (dl < b2) search(nd.left, x, best);
    if (dr < best.distance * best.distance) search(nd.right, x, best);
  } else {
    if (dr < b2) search(nd.right, x, best);
    if (dl < best.distance * best.distance) search(nd.left, x, best);
  }
}

void MeshLocator::gather(int node, const Vec3& x, double radius, std::vector<int>& out) const {
  const Node& nd = nodes_[node];
  if (nd.box.squaredExteriorDistance(x) > radius * radius) return;
  if (nd.left < 0) {
    for (int i = nd.begin; i < nd.end; ++i) {
      const auto& v = mesh_->panels[order_[i]].v;
      if (closest_point_on_triangle(x, v[0], v[1], v[2]).distance <= radius) out.push_back(order_[i]);
    }
    return;
  }
  gather(nd.left, x, radius, out);
  gather(nd.right, x, radius, out);
}

ClosestPoint MeshLocator::closest(const Vec3& x) const {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  const int c = cell_index(x);
  if (c >= 0 && cand_start_[c + 1] > cand_start_[c]) {
    for (int t = cand_start_[c]; t < cand_start_[c + 1]; ++t) {
      const int p = cand_[t];
      const auto& v = mesh_->panels[p].v;
      ClosestPoint cp = closest_point_on_triangle(x, v[0], v[1], v[2]);
      if (cp.distance < best.distance) {
        best = cp;
        best.panel = p;
      }
    }
    return best;
  }
  search(0, x, best);
  return best;
}

double MeshLocator::sign_at(const Vec3& x, const ClosestPoint& cp) const {
  const auto& f = mesh_->faces[cp.panel];
  Vec3 n;
  if (cp.feature == 6)
    n = mesh_->panels[cp.panel].normal;
  else if (cp.feature < 3)
    n = vertex_normals_[f[cp.feature]];
  else
    n = edge_normals_[cp.panel][cp.feature - 3];
  const double s = (x - cp.point).dot(n);
  return s < 0 ? 1.0 : (s > 0 ? -1.0 : 0.0);
}

double MeshLocator::signed_distance(const Vec3& x) const {
  const ClosestPoint cp = closest(x);
  return sign_at(x, cp) * cp.distance;
}

int MeshLocator::cell_index(const Vec3& x) const {
  int ijk[3];
  for (int a = 0; a < 3; ++a) {
    const double t = (x[a] - grid_lo_[a]) / cell_;
    if (!(t >= 0) || t >= n_[a]) return -1;
    ijk[a] = static_cast<int>(t);
  }
  return (ijk[2] * n_[1] + ijk[1]) * n_[0] + ijk[0];
}

double MeshLocator::clearance(const Vec3& x, bool* is_inside) const {
  const int c = cell_index(x);
  if (c < 0) {
    *is_inside = false;
    return 2.0 * cell_;
  }
  const int steps = cell_steps_[c];
  if (steps >= 2) {
    *is_inside = cell_sign_[c] > 0;
    return (steps - 1) * cell_;
  }
  const double sd = signed_distance(x);
  *is_inside = sd > 0;
  return std::abs(sd);
}

std::vector<int> surface_ball(const BoundaryMesh& mesh, const Vec3& q, double r) {
  if (!(r > 0)) throw UsageError("surface_ball: radius must be positive");
  std::vector<int> out;
  const double touch = 1e-12 * std::max(1.0, mesh.diameter);
  for (int j = 0; j < mesh.num_panels(); ++j) {
    const Panel& p = mesh.panels[j];
    if ((p.centroid - q).norm() <= r) {
      out.push_back(j);
      continue;
    }
    if ((p.centroid - q).norm() <= p.diameter &&
        closest_point_on_triangle(q, p.v[0], p.v[1], p.v[2]).distance <= touch)
      out.push_back(j);
  }
  return out;
}

Vec3 averaged_inward_normal(const BoundaryMesh& mesh, const Vec3& q, double r) {
  Vec3 d = Vec3::Zero();
  for (int j : surface_ball(mesh, q, r)) d -= mesh.panels[j].area * mesh.panels[j].normal;
  if (d.norm() < 1e-14 * mesh.total_area) d = mesh.interior_point - q;
  return d.normalized();
}

CorkscrewPoint corkscrew_point(const BoundaryMesh& mesh, const Vec3& q, double r) {
  if (!(r > 0)) throw UsageError("corkscrew_point: radius must be positive");
  CorkscrewPoint out;
  const MeshLocator& loc = mesh.locator();
  if (r >= mesh.inradius) {
    out.point = mesh.interior_point;
    out.r_used = r;
    out.clamped = true;
    out.warning = "radius exceeds inradius; interior point returned";
    return out;
  }
  if (r > mesh.r_omega_estimate) {
    std::ostringstream os;
    os << "radius " << r << " clamped to r_omega " << mesh.r_omega_estimate;
    out.warning = os.str();
    out.clamped = true;
    r = mesh.r_omega_estimate;
  }
  out.r_used = r;
  auto acceptable = [&](const Vec3& a) {
    const double d = loc.signed_distance(a);
    return d >= r / kCorkscrewC0 && d <= kCorkscrewC0 * r && (a - q).norm() >= 0.5 * r * (1 - 1e-12);
  };
  const Vec3 a = q + 0.5 * r * averaged_inward_normal(mesh, q, r);
  if (acceptable(a)) {
    out.point = a;
    return out;
  }
  // fall back to the segment toward the interior point
  const Vec3 seg = mesh.interior_point - q;
  const double len = seg.norm();
  for (double t = 0.5 * r; t <= len; t += 0.125 * r) {
    const Vec3 b = q + (t / len) * seg;
    if (acceptable(b)) {
      out.point = b;
      return out;
    }
  }
  out.point = mesh.interior_point;
  out.clamped = true;
  out.warning += (out.warning.empty() ? "" : "; ") + std::string("no admissible point on the fallback segment");
  return out;
}

double cone_aperture_constant(double aperture) { return std::tan(aperture); }

double default_cone_height(const BoundaryMesh& mesh) {
  return std::min(0.5 * mesh.r_omega_estimate, 2.0 * mesh.mean_panel_size());
}

Cone cone_samples(const BoundaryMesh& mesh, const Vec3& q, double aperture, double height, int n_rays,
                  int n_radii) {
  if (!(aperture > 0 && aperture < kPi / 2)) throw UsageError("cone_samples: aperture must lie in (0, pi/2)");
  if (height < 0 || n_rays < 1 || n_radii < 1) throw UsageError("cone_samples: bad height or counts");
  Cone cone;
  cone.vertex = q;
  cone.aperture = aperture;
  cone.height = height;
  if (height == 0.0) {
    cone.axis = averaged_inward_normal(mesh, q, mesh.mean_panel_size());
    return cone;
  }
  cone.axis = averaged_inward_normal(mesh, q, std::max(0.5 * height, 1e-9));
  const Vec3 e1 = (std::abs(cone.axis[0]) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(cone.axis).normalized();
  const Vec3 e2 = cone.axis.cross(e1);
  const double a = cone_aperture_constant(aperture);
  const double polar = 0.5 * aperture;
  const MeshLocator& loc = mesh.locator();
  for (int i = 0; i < n_radii; ++i) {
    const double rho = height * std::pow(0.5, i);
    for (int j = 0; j < n_rays; ++j) {
      const double phi = 2 * kPi * (j + 0.5 * (i % 2)) / n_rays;
      const Vec3 dir =
          std::cos(polar) * cone.axis + std::sin(polar) * (std::cos(phi) * e1 + std::sin(phi) * e2);
      const Vec3 x = q + rho * dir;
      const double d = loc.signed_distance(x);
      if (d > 0 && (x - q).norm() <= (1 + a) * d)
        cone.sample_points.push_back(x);
      else
        ++cone.discarded;
    }
  }
  return cone;
}

Cone cone_samples(const BoundaryMesh& mesh, const Vec3& q, const ConeParams& params) {
  const double h = params.height > 0 ? params.height : default_cone_height(mesh);
  return cone_samples(mesh, q, params.aperture, h, params.n_rays, params.n_radii);
}

void write_obj(const BoundaryMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path);
  os << "# boundary mesh: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces\n";
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) os << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& f : mesh.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

}  // namespace driftbie
