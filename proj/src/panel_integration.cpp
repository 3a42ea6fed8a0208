#include "driftbie/panel_integration.hpp"

#include "driftbie/quadrature.hpp"

#include <cmath>

namespace driftbie {

std::string to_string(SingularRule rule) { return rule == SingularRule::duffy ? "duffy" : "kernel-split"; }

SingularRule parse_singular_rule(const std::string& name) {
  if (name == "duffy") return SingularRule::duffy;
  if (name == "kernel-split" || name == "kernel_split") return SingularRule::kernel_split;
  throw InputError("unknown singular rule '" + name + "'");
}

TriangleLaplace laplace_triangle(const Vec3& x, const std::array<Vec3, 3>& v, Limit limit) {
  TriangleLaplace out;
  const Vec3 cr = (v[1] - v[0]).cross(v[2] - v[0]);
  const Vec3 n = cr.normalized();
  const double w = (x - v[0]).dot(n);
  const Vec3 xp = x - w * n;
  const double scale = std::max({(v[1] - v[0]).norm(), (v[2] - v[1]).norm(), (v[0] - v[2]).norm()});
  const bool in_plane = std::abs(w) <= 1e-13 * scale;
  const double aw = std::abs(w);
  bool inside = true;
  Vec3 grad_t = Vec3::Zero();
  double pot = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = v[i];
    const Vec3& b = v[(i + 1) % 3];
    const Vec3 t = (b - a).normalized();
    const Vec3 m = t.cross(n);
    const double sm = (a - xp).dot(t), sp = (b - xp).dot(t), h = (a - xp).dot(m);
    if (h <= 0) inside = false;
    const double rm = (x - a).norm(), rp = (x - b).norm();
    const double r0sq = h * h + w * w;
    const double r0 = std::sqrt(r0sq);
    double f;
    if (r0 > 1e-14 * scale) {
      f = std::asinh(sp / r0) - std::asinh(sm / r0);
    } else if (sm * sp > 0) {
      f = sp > 0 ? std::log(sp / sm) : std::log(sm / sp);
    } else {
      throw PoleError("laplace_triangle: target on a panel edge");
    }
    pot += h * f;
    grad_t -= m * f;
    if (!in_plane && h != 0.0)
      pot -= aw * (std::atan(h * sp / (r0sq + aw * rp)) - std::atan(h * sm / (r0sq + aw * rm)));
  }
  double omega = 0.0;
  if (!in_plane) {
    const Vec3 r1 = v[0] - x, r2 = v[1] - x, r3 = v[2] - x;
    const double l1 = r1.norm(), l2 = r2.norm(), l3 = r3.norm();
    const double num = r1.dot(r2.cross(r3));
    const double den = l1 * l2 * l3 + r1.dot(r2) * l3 + r1.dot(r3) * l2 + r2.dot(r3) * l1;
    omega = 2.0 * std::atan2(num, den);
  } else if (inside) {
    omega = limit == Limit::plus ? -2 * kPi : (limit == Limit::minus ? 2 * kPi : 0.0);
  }
  out.potential = pot;
  out.gradient = grad_t + omega * n;
  return out;
}

namespace {

// Linear basis at the barycentric points (2/3, 1/6, 1/6) and permutations.
void linear_basis(const Panel& p, const Vec3& y, double* out) {
  const Vec3 e1 = p.v[1] - p.v[0], e2 = p.v[2] - p.v[0], d = y - p.v[0];
  const double a = e1.dot(e1), b = e1.dot(e2), c = e2.dot(e2);
  const double r1 = d.dot(e1), r2 = d.dot(e2), det = a * c - b * b;
  const double l1 = (c * r1 - b * r2) / det, l2 = (a * r2 - b * r1) / det;
  const double lam[3] = {1.0 - l1 - l2, l1, l2};
  for (int k = 0; k < 3; ++k) out[k] = 2.0 * lam[k] - 1.0 / 3.0;
}

// Least-squares gradient from nearly coplanar edge neighbours, expressed as weights on nodal values.
PanelColumns reconstruction(const BoundaryMesh& mesh, int j) {
  const Panel& p = mesh.panels[j];
  PanelColumns pc;
  pc.n = 1;
  pc.col[0] = j;
  pc.coef[0] = {1.0, 1.0, 1.0};
  std::vector<int> nb;
  std::vector<Eigen::Vector2d> d;
  for (int k = 0; k < 3; ++k) {
    const int q = mesh.neighbors[j][k];
    if (q < 0 || mesh.panels[q].normal.dot(p.normal) < std::cos(kPi / 6)) continue;
    const Vec3 r = mesh.panels[q].centroid - p.centroid;
    nb.push_back(q);
    d.emplace_back(r.dot(p.t1), r.dot(p.t2));
  }
  if (nb.size() < 2) return pc;
  Eigen::Matrix2d DtD = Eigen::Matrix2d::Zero();
  for (const auto& v : d) DtD += v * v.transpose();
  if (std::abs(DtD.determinant()) < 1e-10 * DtD.squaredNorm()) return pc;
  const Eigen::Matrix2d inv = DtD.inverse();
  const TriangleRule& rule = triangle_rule(2);
  for (size_t k = 0; k < nb.size(); ++k) {
    const Eigen::Vector2d alpha = inv * d[k];  // grad = sum_k alpha_k (g_k - g_j)
    pc.col[pc.n] = nb[k];
    for (int a = 0; a < 3; ++a) {
      const auto& l = rule.bary[a];
      const Vec3 e = l[0] * p.v[0] + l[1] * p.v[1] + l[2] * p.v[2] - p.centroid;
      const double s = alpha.dot(Eigen::Vector2d(e.dot(p.t1), e.dot(p.t2)));
      pc.coef[pc.n][a] = s;
      pc.coef[0][a] -= s;
    }
    ++pc.n;
  }
  return pc;
}

}  // namespace

void PanelIntegrator::basis(int j, const Vec3& y, double* out) const {
  if (nb_ == 1)
    out[0] = 1.0;
  else
    linear_basis(mesh_->panels[j], y, out);
}

ColumnResult PanelIntegrator::to_columns(const PanelResult& r, int j) const {
  const PanelColumns& pc = columns_[j];
  ColumnResult out;
  out.n = pc.n;
  for (int c = 0; c < pc.n; ++c) {
    out.col[c] = pc.col[c];
    for (int a = 0; a < nb_; ++a) {
      out.value[c] += pc.coef[c][a] * r.value[a];
      out.gradient[c] += pc.coef[c][a] * r.gradient[a];
    }
  }
  return out;
}

PanelIntegrator::PanelIntegrator(const BoundaryMesh& mesh, const Coefficients& coeffs, const QuadratureOptions& opts)
    : mesh_(&mesh),
      kernel_(coeffs),
      opts_(opts),
      nb_(mesh.nodes_per_panel == 1 && !opts.reconstruct ? 1 : 3) {
  columns_.resize(mesh.num_panels());
  for (int j = 0; j < mesh.num_panels(); ++j) {
    PanelColumns& pc = columns_[j];
    if (mesh.nodes_per_panel == 3) {
      pc.n = 3;
      for (int a = 0; a < 3; ++a) {
        pc.col[a] = 3 * j + a;
        pc.coef[a] = {0.0, 0.0, 0.0};
        pc.coef[a][a] = 1.0;
      }
    } else if (nb_ == 1) {
      pc.n = 1;
      pc.col[0] = j;
      pc.coef[0] = {1.0, 0.0, 0.0};
    } else {
      pc = reconstruction(mesh, j);
    }
  }
  const Mat3& B = kernel_.B();
  tilde_.resize(mesh.num_panels());
  jacobian_.resize(mesh.num_panels());
  for (int j = 0; j < mesh.num_panels(); ++j) {
    const Panel& p = mesh.panels[j];
    for (int k = 0; k < 3; ++k) tilde_[j][k] = B * p.v[k];
    const double at = 0.5 * (tilde_[j][1] - tilde_[j][0]).cross(tilde_[j][2] - tilde_[j][0]).norm();
    jacobian_[j] = p.area / at;
  }
}

Vec3 PanelIntegrator::foot_point(const Vec3& x, int j) const {
  const Panel& p = mesh_->panels[j];
  return x - (x - p.v[0]).dot(p.normal) * p.normal;
}

PanelResult PanelIntegrator::analytic_part(const Vec3& x, int j, Limit limit) const {
  PanelResult out;
  const TriangleLaplace t = laplace_triangle(kernel_.B() * x, tilde_[j], limit);
  const double s = kernel_.prefactor() * jacobian_[j];
  double L[kMaxBasis];
  basis(j, foot_point(x, j), L);
  const Vec3 g = s * (kernel_.B() * t.gradient);
  for (int a = 0; a < nb_; ++a) {
    out.value[a] = L[a] * s * t.potential;
    out.gradient[a] = L[a] * g;
  }
  return out;
}

void PanelIntegrator::rule_sum(const Vec3& x, int j, int degree, bool want_gradient, PanelResult& out) const {
  const Panel& p = mesh_->panels[j];
  const TriangleRule& rule = triangle_rule(degree);
  double L[kMaxBasis];
  for (size_t k = 0; k < rule.bary.size(); ++k) {
    const auto& l = rule.bary[k];
    const Vec3 y = l[0] * p.v[0] + l[1] * p.v[1] + l[2] * p.v[2];
    const double w = rule.weight[k] * p.area;
    basis(j, y, L);
    const Vec3 z = x - y;
    if (want_gradient) {
      double v;
      Vec3 g;
      kernel_.value_gradient(z, v, g);
      for (int a = 0; a < nb_; ++a) {
        out.value[a] += w * L[a] * v;
        out.gradient[a] += (w * L[a]) * g;
      }
    } else {
      const double v = kernel_.value(z);
      for (int a = 0; a < nb_; ++a) out.value[a] += w * L[a] * v;
    }
  }
}

void PanelIntegrator::near_numeric(const Vec3& x, int j, bool want_gradient, bool split, const Vec3& foot,
                                   PanelResult& out) const {
  if (split && nb_ == 1 && !kernel_.has_drift()) return;
  const TriangleRule& rule = triangle_rule(5);
  double Lx[kMaxBasis];
  basis(j, foot, Lx);
  auto leaf = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
    const double area = 0.5 * (b - a).cross(c - a).norm();
    double L[kMaxBasis];
    for (size_t k = 0; k < rule.bary.size(); ++k) {
      const auto& l = rule.bary[k];
      const Vec3 y = l[0] * a + l[1] * b + l[2] * c;
      const double w = rule.weight[k] * area;
      basis(j, y, L);
      const Vec3 z = x - y;
      if (split) {
        const double r = kernel_.remainder(z), g0 = nb_ > 1 ? kernel_.value0(z) : 0.0;
        for (int a2 = 0; a2 < nb_; ++a2) out.value[a2] += w * (r * L[a2] + g0 * (L[a2] - Lx[a2]));
        if (want_gradient) {
          const Vec3 gr = kernel_.remainder_gradient(z);
          const Vec3 gz = nb_ > 1 ? kernel_.gradient0(z) : Vec3::Zero();
          for (int a2 = 0; a2 < nb_; ++a2) out.gradient[a2] += w * (L[a2] * gr + (L[a2] - Lx[a2]) * gz);
        }
      } else {
        double v;
        Vec3 g;
        kernel_.value_gradient(z, v, g);
        for (int a2 = 0; a2 < nb_; ++a2) {
          out.value[a2] += w * L[a2] * v;
          if (want_gradient) out.gradient[a2] += (w * L[a2]) * g;
        }
      }
    }
  };
  struct Item {
    Vec3 a, b, c;
    int depth;
  };
  std::vector<Item> stack;
  const Panel& p = mesh_->panels[j];
  stack.push_back({p.v[0], p.v[1], p.v[2], 0});
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const double diam = std::max({(it.b - it.a).norm(), (it.c - it.b).norm(), (it.a - it.c).norm()});
    const double d = closest_point_on_triangle(x, it.a, it.b, it.c).distance;
    if (it.depth >= opts_.adapt_max_depth || d >= opts_.adapt_eta * diam) {
      if (d == 0.0) throw PoleError("near-field quadrature target lies on the panel");
      leaf(it.a, it.b, it.c);
      continue;
    }
    const Vec3 ab = 0.5 * (it.a + it.b), bc = 0.5 * (it.b + it.c), ca = 0.5 * (it.c + it.a);
    // pushed in reverse so children are summed in a fixed order
    stack.push_back({ab, bc, ca, it.depth + 1});
    stack.push_back({ca, bc, it.c, it.depth + 1});
    stack.push_back({ab, it.b, bc, it.depth + 1});
    stack.push_back({it.a, ab, ca, it.depth + 1});
  }
}

void PanelIntegrator::duffy_self(const Vec3& x, int j, bool want_gradient, bool split, PanelResult& out) const {
  if (split && nb_ == 1 && !kernel_.has_drift()) return;
  const Panel& p = mesh_->panels[j];
  const LineRule& g = gauss_legendre(opts_.duffy_points);
  double Lx[kMaxBasis], L[kMaxBasis];
  basis(j, x, Lx);
  for (int s = 0; s < 3; ++s) {
    const Vec3 e0 = p.v[s] - x, e1 = p.v[(s + 1) % 3] - x;
    const double jac = e0.cross(e1).norm();  // twice the sub-triangle area
    for (size_t iv = 0; iv < g.x.size(); ++iv) {
      const Vec3 W = (1 - g.x[iv]) * e0 + g.x[iv] * e1;
      PanelResult line;
      Vec3 ghat = Vec3::Zero();
      if (!split && want_gradient) ghat = jac * kernel_.gradient0(-W);
      for (size_t iu = 0; iu < g.x.size(); ++iu) {
        const double u = g.x[iu];
        const Vec3 y = x + u * W;
        const Vec3 z = x - y;
        const double w = g.w[iu] * jac * u;
        basis(j, y, L);
        if (split) {
          const double r = kernel_.remainder(z), g0 = nb_ > 1 ? kernel_.value0(z) : 0.0;
          for (int a = 0; a < nb_; ++a) line.value[a] += w * (r * L[a] + g0 * (L[a] - Lx[a]));
          if (want_gradient) {
            const Vec3 gr = kernel_.remainder_gradient(z);
            const Vec3 gz = nb_ > 1 ? kernel_.gradient0(z) : Vec3::Zero();
            for (int a = 0; a < nb_; ++a) line.gradient[a] += w * (L[a] * gr + (L[a] - Lx[a]) * gz);
          }
        } else {
          double v;
          Vec3 gg;
          kernel_.value_gradient(z, v, gg);
          for (int a = 0; a < nb_; ++a) {
            line.value[a] += w * L[a] * v;
            // singular part u^2 grad ~ ghat removed; its log-weighted remainder is added below
            if (want_gradient) line.gradient[a] += g.w[iu] * ((u * u * jac) * L[a] * gg - Lx[a] * ghat) / u;
          }
        }
      }
      const double lw = std::log(W.norm());
      for (int a = 0; a < nb_; ++a) {
        out.value[a] += g.w[iv] * line.value[a];
        if (want_gradient) {
          out.gradient[a] += g.w[iv] * line.gradient[a];
          if (!split) out.gradient[a] += (g.w[iv] * lw * Lx[a]) * ghat;
        }
      }
    }
  }
}

PanelResult PanelIntegrator::integrate(const Vec3& x, int j, bool on_panel, bool want_gradient, Limit limit) const {
  PanelResult out;
  const Panel& p = mesh_->panels[j];
  if (on_panel) {
    if (opts_.rule == SingularRule::kernel_split) {
      out = analytic_part(x, j, limit);
      duffy_self(x, j, want_gradient, true, out);
    } else {
      duffy_self(x, j, want_gradient, false, out);
      if (want_gradient && limit != Limit::pv) {
        const PanelResult a = analytic_part(x, j, limit), b = analytic_part(x, j, Limit::pv);
        for (int k = 0; k < nb_; ++k) out.gradient[k] += a.gradient[k] - b.gradient[k];
      }
    }
    return out;
  }
  const double ratio = (x - p.centroid).norm() / p.diameter;
  if (ratio >= opts_.far_ratio) {
    rule_sum(x, j, opts_.far_degree, want_gradient, out);
  } else if (ratio >= opts_.mid_ratio) {
    rule_sum(x, j, opts_.mid_degree, want_gradient, out);
  } else if (opts_.rule == SingularRule::kernel_split) {
    out = analytic_part(x, j, Limit::pv);
    near_numeric(x, j, want_gradient, true, foot_point(x, j), out);
  } else {
    near_numeric(x, j, want_gradient, false, foot_point(x, j), out);
  }
  return out;
}

}  // namespace driftbie
