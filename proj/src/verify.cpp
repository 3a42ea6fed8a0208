#include "driftbie/verify.hpp"

#include "driftbie/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

namespace driftbie {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string coeff_text(const Coefficients& k) {
  std::ostringstream os;
  os.precision(17);
  os << k.A.reshaped().transpose() << '|' << k.b.transpose() << '|' << (k.antisym_affine ? 1 : 0);
  return os.str();
}

std::string mesh_text(const BoundaryMesh& m) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(m.spec.kind) << '|' << m.spec.scale << '|' << m.spec.refinement_level << '|' << m.spec.flat_subdivisions
     << '|' << m.spec.quadrature_order << '|' << m.num_panels();
  return os.str();
}

void require_symmetric(const Coefficients& k, const std::string& id) {
  if (k.antisym_affine) throw UsageError(id + " requires a symmetric coefficient matrix");
}

double distance_inside(const BoundaryMesh& mesh, const Vec3& x) { return mesh.locator().signed_distance(x); }

CheckReport aborted(CheckReport rep, const std::string& why) {
  rep.notes.push_back(why);
  rep.constant = kNaN;
  rep.pass = false;
  return rep;
}

}  // namespace

// ---------------------------------------------------------------------------
// names

std::string to_string(InteriorCheck c) {
  switch (c) {
    case InteriorCheck::maximum_principle: return "maximum-principle";
    case InteriorCheck::caccioppoli: return "caccioppoli";
    case InteriorCheck::harnack: return "harnack";
    case InteriorCheck::carleson: return "carleson";
  }
  return "?";
}

std::string to_string(BoundaryCheck c) {
  switch (c) {
    case BoundaryCheck::rellich_global: return "rellich-global";
    case BoundaryCheck::rellich_local: return "rellich-local";
    case BoundaryCheck::rellich_local_adjoint: return "rellich-local-adjoint";
    case BoundaryCheck::u_by_gradient: return "u-by-gradient";
    case BoundaryCheck::jump: return "jump";
  }
  return "?";
}

std::string to_string(KernelCheck c) {
  switch (c) {
    case KernelCheck::defining_property: return "defining-property";
    case KernelCheck::symmetry: return "symmetry";
    case KernelCheck::bounds: return "bounds";
    case KernelCheck::perturbation: return "perturbation";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// subjects

InteriorSubject subject_of(const Solution& sol) {
  InteriorSubject s;
  s.mesh = sol.mesh;
  s.description = sol.kind == SolutionKind::regularity ? "regularity solution" : "adjoint Dirichlet solution";
  auto keep = std::make_shared<Solution>(sol);
  s.values = [keep](const std::vector<Vec3>& x) { return evaluate(*keep, x); };
  s.gradients = [keep](const std::vector<Vec3>& x) { return gradient_evaluate(*keep, x); };
  const Vec& f = sol.boundary_data.values;
  if (f.size() > 0) s.boundary_range = std::array<double, 2>{f.minCoeff(), f.maxCoeff()};
  return s;
}

InteriorSubject subject_of(std::shared_ptr<const DomainGreen> green, const Vec3& pole) {
  InteriorSubject s;
  s.mesh = green->system().mesh();
  s.description = "domain Green function";
  s.values = [green, pole](const std::vector<Vec3>& x) { return green->values(x, pole); };
  s.boundary_range = std::array<double, 2>{0.0, 0.0};
  s.green = std::move(green);
  return s;
}

InteriorSubject constant_subject(MeshPtr mesh, double c) {
  InteriorSubject s;
  s.mesh = std::move(mesh);
  s.description = "constant";
  s.values = [c](const std::vector<Vec3>& x) { return Vec::Constant(static_cast<int>(x.size()), c); };
  s.gradients = [](const std::vector<Vec3>& x) { return std::vector<Vec3>(x.size(), Vec3::Zero()); };
  s.boundary_range = std::array<double, 2>{c, c};
  return s;
}

BallRule ball_rule(const Vec3& center, double radius, int n_radial, int n_polar, int n_azimuth) {
  const LineRule& gr = gauss_legendre(n_radial);
  const LineRule& gp = gauss_legendre(n_polar);
  BallRule out;
  for (int i = 0; i < n_radial; ++i) {
    const double rho = radius * gr.x[i];
    const double wr = radius * gr.w[i] * rho * rho;
    for (int j = 0; j < n_polar; ++j) {
      const double ct = 2.0 * gp.x[j] - 1.0;
      const double st = std::sqrt(std::max(0.0, 1 - ct * ct));
      const double wp = 2.0 * gp.w[j];
      for (int k = 0; k < n_azimuth; ++k) {
        const double phi = 2 * kPi * (k + 0.5) / n_azimuth;
        out.points.push_back(center + rho * Vec3(st * std::cos(phi), st * std::sin(phi), ct));
        out.weights.push_back(wr * wp * 2 * kPi / n_azimuth);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// interior checks

namespace {

std::vector<double> default_radii(const BoundaryMesh& mesh, double lead) {
  const double r0 = lead * mesh.inradius;
  return {r0, 0.5 * r0, 0.25 * r0};
}

CheckReport maximum_principle(const InteriorSubject& u, const InteriorOptions& opts, CheckReport rep) {
  if (!u.boundary_range) return aborted(rep, "boundary range unknown");
  const BoundaryMesh& mesh = *u.mesh;
  Eigen::AlignedBox3d box;
  for (const auto& v : mesh.vertices) box.extend(v);
  std::vector<Vec3> pts;
  const int n = std::max(2, opts.lattice);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 t((i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n);
        const Vec3 x = box.min() + t.cwiseProduct(box.max() - box.min());
        if (distance_inside(mesh, x) >= mesh.panel_size()) pts.push_back(x);
      }
  if (pts.empty()) return aborted(rep, "no interior lattice points");
  const Vec v = u.values(pts);
  const auto [lo, hi] = *u.boundary_range;
  const double scale = std::max({std::abs(lo), std::abs(hi), 1e-300});
  double worst = 0.0;
  for (int i = 0; i < v.size(); ++i) worst = std::max({worst, (v[i] - hi) / scale, (lo - v[i]) / scale});
  rep.constant = worst;
  rep.constants["samples"] = static_cast<double>(pts.size());
  rep.constants["interior_min"] = v.minCoeff();
  rep.constants["interior_max"] = v.maxCoeff();
  rep.judge();
  return rep;
}

CheckReport caccioppoli(const InteriorSubject& u, const InteriorOptions& opts, CheckReport rep) {
  if (!u.gradients) return aborted(rep, "gradients unavailable");
  const BoundaryMesh& mesh = *u.mesh;
  const Vec3 c = opts.center.value_or(mesh.interior_point);
  const double room = distance_inside(mesh, c) - mesh.panel_size();
  const auto radii = opts.radii.empty() ? default_radii(mesh, 0.25) : opts.radii;
  double cmax = -1, cmin = std::numeric_limits<double>::infinity();
  int used = 0;
  for (double r : radii) {
    if (2 * r > room) {
      rep.notes.push_back("radius " + format_number(r) + " skipped: B_2r leaves the domain");
      continue;
    }
    const BallRule b1 = ball_rule(c, r), b2 = ball_rule(c, 2 * r);
    const auto g = u.gradients(b1.points);
    const Vec v = u.values(b2.points);
    double lhs = 0, mass = 0;
    for (size_t i = 0; i < g.size(); ++i) lhs += b1.weights[i] * g[i].squaredNorm();
    for (int i = 0; i < v.size(); ++i) mass += b2.weights[i] * v[i] * v[i];
    const double ratio = lhs / ((1 + 1 / (r * r)) * mass);
    if (used == 0) rep.constants["lhs_first"] = lhs;
    rep.constants["ratio_r" + format_number(r)] = ratio;
    cmax = std::max(cmax, ratio);
    cmin = std::min(cmin, ratio);
    ++used;
  }
  if (used == 0) return aborted(rep, "no admissible balls");
  rep.constant = cmax;
  rep.constants["spread"] = cmax / cmin;
  rep.judge();
  return rep;
}

CheckReport harnack(const InteriorSubject& u, const InteriorOptions& opts, CheckReport rep) {
  const BoundaryMesh& mesh = *u.mesh;
  const Vec3 c = opts.center.value_or(mesh.interior_point);
  const double room = distance_inside(mesh, c);
  const auto radii = opts.radii.empty() ? default_radii(mesh, 0.2) : opts.radii;
  double worst = 0;
  int used = 0;
  for (double r : radii) {
    if (4 * r > room) {
      rep.notes.push_back("radius " + format_number(r) + " skipped: B_4r leaves the domain");
      continue;
    }
    BallRule b = ball_rule(c, r, 4, 6, 8);
    b.points.push_back(c);
    const Vec v = u.values(b.points);
    if ((v.array() <= 0).any()) return aborted(rep, "non-positive samples: harnack needs a positive solution");
    const double ratio = v.maxCoeff() / v.minCoeff();
    rep.constants["ratio_r" + format_number(r)] = ratio;
    worst = std::max(worst, ratio);
    ++used;
  }
  if (used == 0) return aborted(rep, "no admissible balls");
  rep.constant = worst;
  rep.judge();
  return rep;
}

CheckReport carleson(const InteriorSubject& u, const InteriorOptions& opts, CheckReport rep) {
  if (!u.green) return aborted(rep, "carleson needs domain Green data");
  const DomainGreen& G = *u.green;
  const BoundaryMesh& mesh = *u.mesh;
  const auto radii = dyadic_radii(mesh, opts.r_min_panels);
  const Mat& S = G.system().S();
  const Kernel K(G.system().coeffs());
  double worst = 0, trace_worst = 0;
  int used = 0, pole_inside = 0;
  for (const Vec3& q : check_centers(mesh, opts.centers))
    for (double r : radii) {
      const Vec3 pole = far_pole(mesh, q, r);
      if ((pole - q).norm() < 5 * r) ++pole_inside;
      std::vector<Vec3> xs = tent_samples(mesh, q, r, mesh.panel_size());
      if (xs.empty()) continue;
      const Vec3 A = corkscrew_point(mesh, q, r).point;
      xs.push_back(A);
      Vec v;
      try {
        v = G.values(xs, pole);
      } catch (const Error& e) {
        rep.notes.push_back(std::string("pair skipped: ") + e.what());
        continue;
      }
      if ((v.array() <= 0).any()) return aborted(rep, "non-positive Green samples: carleson needs a positive function");
      const int n = static_cast<int>(xs.size()) - 1;
      for (int i = 0; i < n; ++i) worst = std::max(worst, v[i] / v[n]);
      // boundary trace of G(., pole) on Delta_2r relative to u(A_r(q))
      const Vec& g = G.corrector_density(pole);
      for (int j : surface_ball(mesh, q, 2 * r))
        for (int a = 0; a < mesh.nodes_per_panel; ++a) {
          const int i = j * mesh.nodes_per_panel + a;
          const double trace = K.value(mesh.nodes[i] - pole) - S.row(i).dot(g);
          trace_worst = std::max(trace_worst, std::abs(trace) / v[n]);
        }
      ++used;
    }
  if (used == 0) return aborted(rep, "no admissible (q, r) pairs");
  rep.constant = worst;
  rep.constants["pairs"] = used;
  rep.constants["trace_ratio"] = trace_worst;
  rep.constants["pole_inside_T5r"] = pole_inside;
  if (trace_worst > 1e-3) rep.notes.push_back("boundary trace above 1e-3 of the interior scale");
  if (pole_inside > 0)
    rep.notes.push_back(std::to_string(pole_inside) + " pairs with the pole inside T_5r (domain too small for 5r)");
  rep.judge();
  return rep;
}

}  // namespace

CheckReport interior_checks(const InteriorSubject& u, InteriorCheck check, const InteriorOptions& opts) {
  if (!u.mesh || !u.values) throw UsageError("interior check without a subject");
  CheckReport rep;
  rep.id = to_string(check);
  rep.ceiling = opts.ceiling;
  std::ostringstream os;
  os.precision(17);
  os << rep.id << '|' << mesh_text(*u.mesh) << '|' << u.description << '|'
     << opts.center.value_or(u.mesh->interior_point).transpose() << '|' << opts.lattice << '|' << opts.r_min_panels
     << '|' << opts.centers;
  for (double r : opts.radii) os << '|' << r;
  rep.inputs_digest = hex_digest(os.str());
  switch (check) {
    case InteriorCheck::maximum_principle: return maximum_principle(u, opts, rep);
    case InteriorCheck::caccioppoli: return caccioppoli(u, opts, rep);
    case InteriorCheck::harnack: return harnack(u, opts, rep);
    case InteriorCheck::carleson: return carleson(u, opts, rep);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// boundary checks

namespace {

double tangential_energy(const BoundaryMesh& mesh, const BoundaryField& f, const std::vector<char>* mask) {
  const Grad2& g = *f.tangential_gradient;
  double s = 0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (!mask || (*mask)[i]) s += mesh.weights[i] * g.row(i).squaredNorm();
  return s;
}

std::vector<char> ball_mask(const BoundaryMesh& mesh, const Vec3& q, double r) {
  std::vector<char> m(mesh.num_nodes(), 0);
  for (int j : surface_ball(mesh, q, r))
    for (int a = 0; a < mesh.nodes_per_panel; ++a) m[j * mesh.nodes_per_panel + a] = 1;
  return m;
}

CheckReport rellich_global(const std::vector<Solution>& sols, CheckReport rep) {
  double worst = -1;
  int used = 0;
  for (size_t s = 0; s < sols.size(); ++s) {
    const Solution& sol = sols[s];
    require_symmetric(sol.coeffs, rep.id);
    if (!sol.boundary_data.has_gradient()) throw UsageError("rellich checks need tangential gradients of the data");
    const BoundaryMesh& mesh = *sol.mesh;
    const double tang = tangential_energy(mesh, sol.boundary_data, nullptr);
    if (!(tang > 1e-14 * std::max(1.0, sol.boundary_data.values.squaredNorm()))) {
      rep.notes.push_back("solution " + std::to_string(s) + " skipped: tangential gradient vanishes (0/0)");
      continue;
    }
    const BoundaryField dn = interior_conormal(sol);
    double normal = 0;
    for (int i = 0; i < mesh.num_nodes(); ++i) normal += mesh.weights[i] * dn.values[i] * dn.values[i];
    const double ratio = normal / tang;
    rep.constants["ratio_" + std::to_string(s)] = ratio;
    worst = std::max(worst, ratio);
    ++used;
  }
  if (used == 0) {
    rep.skipped = true;
    rep.notes.push_back("every solution had vanishing tangential gradient");
    rep.judge();
    return rep;
  }
  rep.constant = worst;
  rep.judge();
  return rep;
}

CheckReport rellich_local(const std::vector<Solution>& sols, const BoundaryCheckOptions& opts, CheckReport rep) {
  double worst = -1;
  int used = 0;
  for (const Solution& sol : sols) {
    require_symmetric(sol.coeffs, rep.id);
    if (!sol.boundary_data.has_gradient()) throw UsageError("rellich checks need tangential gradients of the data");
    const BoundaryMesh& mesh = *sol.mesh;
    const BoundaryField dn = interior_conormal(sol);
    const auto radii = dyadic_radii(mesh, opts.r_min_panels);
    for (const Vec3& q : check_centers(mesh, opts.centers))
      for (double r : radii) {
        const auto in_r = ball_mask(mesh, q, r);
        double lhs = 0;
        for (int i = 0; i < mesh.num_nodes(); ++i)
          if (in_r[i]) lhs += mesh.weights[i] * dn.values[i] * dn.values[i];
        const auto in_2r = ball_mask(mesh, q, 2 * r);
        const double tang = tangential_energy(mesh, sol.boundary_data, &in_2r);
        // T_2r(q) = domain part of B(q, 2r), points kept a quarter panel away from the boundary
        const BallRule b = ball_rule(q, 2 * r, 6, 6, 12);
        std::vector<Vec3> pts;
        std::vector<double> w;
        for (size_t k = 0; k < b.points.size(); ++k)
          if (distance_inside(mesh, b.points[k]) >= 0.25 * mesh.panel_size()) {
            pts.push_back(b.points[k]);
            w.push_back(b.weights[k]);
          }
        double vol = 0;
        if (!pts.empty()) {
          const auto g = gradient_evaluate(sol, pts);
          for (size_t k = 0; k < g.size(); ++k) vol += w[k] * g[k].squaredNorm();
        }
        const double rhs = tang + vol / r;
        if (!(rhs > 0)) {
          rep.notes.push_back("pair with vanishing right-hand side skipped");
          continue;
        }
        worst = std::max(worst, lhs / rhs);
        ++used;
      }
  }
  if (used == 0) return aborted(rep, "no admissible (q, r) pairs");
  rep.constant = worst;
  rep.constants["pairs"] = used;
  rep.judge();
  return rep;
}

CheckReport u_by_gradient(const std::vector<Solution>& sols, const BoundaryCheckOptions& opts, CheckReport rep) {
  double worst = 0;
  int used = 0, equality = 0;
  for (const Solution& sol : sols) {
    const BoundaryMesh& mesh = *sol.mesh;
    const double eps = opts.cone.height > 0 ? opts.cone.height : default_cone_height(mesh);
    const int N = mesh.num_nodes();
    const int stride = std::max(1, N / 256);
    const Vec& f = sol.boundary_data.values;
    if (f.maxCoeff() - f.minCoeff() <= 1e-14 * std::max(1.0, f.cwiseAbs().maxCoeff())) {
      // constants solve Lu = 0, so u = f exactly: u* = |f|, (grad u)* = 0
      equality += (N + stride - 1) / stride;
      rep.notes.push_back("constant data: equality without sampling");
      continue;
    }
    std::vector<Vec3> pts;
    std::vector<int> owner;
    for (int i = 0; i < N; i += stride) {
      const Cone c = cone_samples(mesh, mesh.nodes[i], opts.cone);
      for (const auto& x : c.sample_points) {
        pts.push_back(x);
        owner.push_back(i);
      }
    }
    Vec v;
    std::vector<Vec3> g;
    evaluate_with_gradient(sol, pts, v, g);
    std::map<int, std::pair<double, double>> star;  // node -> (u*, (grad u)*)
    for (size_t k = 0; k < pts.size(); ++k) {
      auto& s = star[owner[k]];
      s.first = std::max(s.first, std::abs(v[k]));
      s.second = std::max(s.second, g[k].norm());
    }
    const double scale = std::max(1e-300, sol.boundary_data.values.cwiseAbs().maxCoeff());
    for (const auto& [i, s] : star) {
      const double excess = s.first - std::abs(sol.boundary_data.values[i]);
      if (s.second <= 1e-12 * scale / eps) {
        if (excess > 1e-8 * scale) worst = std::numeric_limits<double>::infinity();
        ++equality;
        continue;
      }
      worst = std::max(worst, excess / (eps * s.second));
      ++used;
    }
  }
  rep.constant = worst;
  rep.constants["nodes"] = used;
  rep.constants["flat_nodes"] = equality;
  rep.judge();
  return rep;
}

}  // namespace

CheckReport jump_check(const MeshPtr& mesh, const Coefficients& coeffs, const std::vector<DataSpec>& family,
                       const BoundaryCheckOptions& opts) {
  CheckReport rep;
  rep.id = to_string(BoundaryCheck::jump);
  rep.ceiling = opts.ceiling;
  std::ostringstream os;
  os << rep.id << '|' << mesh_text(*mesh) << '|' << coeff_text(coeffs);
  for (const auto& d : family) os << '|' << BoundaryData(d, coeffs).describe();
  rep.inputs_digest = hex_digest(os.str());
  const int N = mesh->num_nodes();
  Mat F(N, static_cast<int>(family.size()));
  for (size_t c = 0; c < family.size(); ++c) F.col(c) = sample(mesh, BoundaryData(family[c], coeffs)).values;
  std::vector<char> fi, fe;
  const Mat Mi = conormal_onesided(*mesh, coeffs, F, Side::interior, opts.layer, &fi);
  const Mat Me = conormal_onesided(*mesh, coeffs, F, Side::exterior, opts.layer, &fe);
  double worst = 0;
  for (int c = 0; c < F.cols(); ++c) {
    double num = 0, den = 0;
    for (int i = 0; i < N; ++i) {
      if (fi[i] || fe[i]) continue;
      const double r = Mi(i, c) - Me(i, c) - F(i, c);
      num += mesh->weights[i] * r * r;
      den += mesh->weights[i] * F(i, c) * F(i, c);
    }
    const double res = den > 0 ? std::sqrt(num / den) : 0.0;
    rep.constants["residual_" + std::to_string(c)] = res;
    worst = std::max(worst, res);
  }
  int flagged = 0;
  for (int i = 0; i < N; ++i) flagged += (fi[i] || fe[i]) ? 1 : 0;
  rep.constants["flagged_nodes"] = flagged;
  rep.constant = worst;
  rep.judge();
  return rep;
}

CheckReport boundary_checks(const std::vector<Solution>& solutions, BoundaryCheck check,
                            const BoundaryCheckOptions& opts) {
  if (solutions.empty()) throw UsageError("boundary check without solutions");
  for (const auto& s : solutions)
    if (s.kind != SolutionKind::regularity && check != BoundaryCheck::u_by_gradient)
      throw UsageError("boundary checks use single layer (regularity) solutions");
  if (check == BoundaryCheck::jump) {
    std::vector<DataSpec> none;
    // densities are the sampled data of each solution
    const MeshPtr& mesh = solutions.front().mesh;
    const int N = mesh->num_nodes();
    CheckReport rep;
    rep.id = to_string(check);
    rep.ceiling = opts.ceiling;
    Mat F(N, static_cast<int>(solutions.size()));
    for (size_t c = 0; c < solutions.size(); ++c) F.col(c) = solutions[c].boundary_data.values;
    std::vector<char> fi, fe;
    const Coefficients& k = solutions.front().coeffs;
    const Mat Mi = conormal_onesided(*mesh, k, F, Side::interior, opts.layer, &fi);
    const Mat Me = conormal_onesided(*mesh, k, F, Side::exterior, opts.layer, &fe);
    std::ostringstream os;
    os << rep.id << '|' << mesh_text(*mesh) << '|' << coeff_text(k) << '|' << F.sum();
    rep.inputs_digest = hex_digest(os.str());
    double worst = 0;
    for (int c = 0; c < F.cols(); ++c) {
      double num = 0, den = 0;
      for (int i = 0; i < N; ++i) {
        if (fi[i] || fe[i]) continue;
        const double r = Mi(i, c) - Me(i, c) - F(i, c);
        num += mesh->weights[i] * r * r;
        den += mesh->weights[i] * F(i, c) * F(i, c);
      }
      worst = std::max(worst, den > 0 ? std::sqrt(num / den) : 0.0);
    }
    rep.constant = worst;
    rep.judge();
    return rep;
  }
  CheckReport rep;
  rep.id = to_string(check);
  rep.ceiling = opts.ceiling;
  std::ostringstream os;
  os.precision(17);
  os << rep.id << '|' << opts.r_min_panels << '|' << opts.centers << '|' << opts.cone.aperture << '|' << opts.cone.height;
  for (const auto& s : solutions)
    os << '|' << mesh_text(*s.mesh) << '|' << coeff_text(s.coeffs) << '|' << s.boundary_data.values.sum();
  rep.inputs_digest = hex_digest(os.str());
  switch (check) {
    case BoundaryCheck::rellich_global: return rellich_global(solutions, rep);
    case BoundaryCheck::rellich_local:
    case BoundaryCheck::rellich_local_adjoint: return rellich_local(solutions, opts, rep);
    case BoundaryCheck::u_by_gradient: return u_by_gradient(solutions, opts, rep);
    case BoundaryCheck::jump: break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// kernel checks

double kernel_weak_form(const Coefficients& coeffs, const Vec3& y, const GaussianBump& phi, int* refinements) {
  const Kernel K(coeffs);
  const double s2 = phi.width * phi.width;
  const double R = (phi.center - y).norm() + 8.0 * phi.width;
  auto integrate = [&](int level) {
    const int m = 6 << level, np = 12 << level, na = 24 << level;
    const LineRule& gr = gauss_legendre(8);
    const LineRule& gp = gauss_legendre(np);
    std::vector<Vec3> dirs;
    std::vector<double> dw;
    for (int j = 0; j < np; ++j) {
      const double ct = 2 * gp.x[j] - 1, st = std::sqrt(std::max(0.0, 1 - ct * ct));
      for (int k = 0; k < na; ++k) {
        const double ph = 2 * kPi * (k + 0.5) / na;
        dirs.emplace_back(st * std::cos(ph), st * std::sin(ph), ct);
        dw.push_back(2 * gp.w[j] * 2 * kPi / na);
      }
    }
    double total = 0;
    for (int iv = 0; iv < m; ++iv) {
      double part = 0;
      for (size_t g = 0; g < gr.x.size(); ++g) {
        const double rho = R * (iv + gr.x[g]) / m;
        const double wr = R / m * gr.w[g] * rho * rho;
        double shell = 0;
        for (size_t d = 0; d < dirs.size(); ++d) {
          const Vec3 x = y + rho * dirs[d];
          const Vec3 z = x - y;
          const Vec3 dG = K.gradient(z);
          const Vec3 xc = x - phi.center;
          const double ph = std::exp(-xc.squaredNorm() / s2);
          const Vec3 dph = -2.0 / s2 * ph * xc;
          shell += dw[d] * ((coeffs.A * dG).dot(dph) + coeffs.b.dot(dG) * ph);
        }
        part += wr * shell;
      }
      total += part;
    }
    return total;
  };
  double prev = integrate(0), cur = prev;
  int level = 1;
  for (; level <= 3; ++level) {
    cur = integrate(level);
    if (std::abs(cur - prev) <= 1e-10 * std::max(1.0, std::abs(cur))) break;
    prev = cur;
  }
  if (refinements) *refinements = std::min(level, 3);
  if (std::abs(cur - prev) > 1e-3) {
    std::ostringstream os;
    os << "weak-form quadrature did not converge (last refinements " << prev << " vs " << cur << ")";
    throw NumericalError(os.str());
  }
  return cur;
}

CheckReport kernel_checks(const Coefficients& coeffs, KernelCheck check, const KernelCheckOptions& opts) {
  CheckReport rep;
  rep.id = to_string(check);
  rep.ceiling = opts.ceiling;
  std::ostringstream os;
  os.precision(17);
  os << rep.id << '|' << coeff_text(coeffs) << '|' << opts.pole.transpose() << '|' << opts.pairs << '|' << opts.seed;
  for (const auto& b : opts.bumps) os << '|' << b.center.transpose() << ',' << b.width;
  rep.inputs_digest = hex_digest(os.str());
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto in_ball = [&]() {
    Vec3 v;
    do v = Vec3(U(rng), U(rng), U(rng));
    while (v.squaredNorm() > 1.0);
    return v;
  };

  switch (check) {
    case KernelCheck::defining_property: {
      if (coeffs.antisym_affine) throw UsageError("defining-property check uses the constant-coefficient kernel");
      std::vector<GaussianBump> bumps = opts.bumps;
      const Vec3& y = opts.pole;
      if (bumps.empty())
        bumps = {{y, 0.3},
                 {y + Vec3(0.2, 0, 0), 0.4},
                 {y + Vec3(0, -0.15, 0.1), 0.5},
                 {y + Vec3(0.1, 0.1, 0.1), 0.35},
                 {y + Vec3(-0.25, 0, 0.05), 0.45}};
      double worst = 0;
      for (size_t i = 0; i < bumps.size(); ++i) {
        const double target = std::exp(-(y - bumps[i].center).squaredNorm() / (bumps[i].width * bumps[i].width));
        const double res = std::abs(kernel_weak_form(coeffs, y, bumps[i]) - target);
        rep.constants["residual_" + std::to_string(i)] = res;
        worst = std::max(worst, res);
      }
      rep.constant = worst;
      if (!std::isfinite(rep.ceiling)) rep.ceiling = opts.tolerance;
      break;
    }
    case KernelCheck::symmetry: {
      double worst = 0;
      for (int i = 0; i < opts.pairs; ++i) {
        const Vec3 x = in_ball(), y = in_ball();
        if ((x - y).norm() < 1e-3) continue;
        const double g = fundamental_solution(coeffs, x, y);
        worst = std::max(worst, std::abs(g - adjoint_kernel_direct(coeffs, y, x)) / std::abs(g));
      }
      rep.constant = worst;
      if (!std::isfinite(rep.ceiling)) rep.ceiling = 1e-12;
      break;
    }
    case KernelCheck::bounds: {
      double cv = 0, cg = 0;
      for (int i = 0; i < opts.pairs; ++i) {
        const Vec3 x = in_ball(), y = in_ball();
        const double d = (x - y).norm();
        if (d < 1e-6) continue;
        cv = std::max(cv, std::abs(fundamental_solution(coeffs, x, y)) * d);
        cg = std::max(cg, fundamental_solution_gradient(coeffs, x, y).norm() * d * d);
      }
      rep.constants["value"] = cv;
      rep.constants["gradient"] = cg;
      rep.constant = std::max(cv, cg);
      break;
    }
    case KernelCheck::perturbation: {
      // |Gamma_b1 - Gamma_b2| <= C |b1 - b2|_{L^6(B)} |x - y|^{-1/2} on the unit ball B
      const double vol6 = std::pow(4.0 / 3.0 * kPi, 1.0 / 6.0);
      double worst = 0;
      for (int i = 0; i < opts.pairs; ++i) {
        const Vec3 b1 = 2.0 * in_ball(), b2 = 2.0 * in_ball();
        const Vec3 x = in_ball(), y = in_ball();
        const double d = (x - y).norm();
        if (d < 1e-6 || (b1 - b2).norm() < 1e-9) continue;
        const Coefficients k1 = Coefficients::make(coeffs.A, b1), k2 = Coefficients::make(coeffs.A, b2);
        const double diff = std::abs(fundamental_solution(k1, x, y) - fundamental_solution(k2, x, y));
        worst = std::max(worst, diff / ((b1 - b2).norm() * vol6 / std::sqrt(d)));
      }
      rep.constant = worst;
      break;
    }
  }
  rep.judge();
  return rep;
}

// ---------------------------------------------------------------------------
// reporting

CheckReport refinement_trend(const std::function<CheckReport(int)>& make, const std::vector<int>& levels) {
  if (levels.empty()) throw UsageError("refinement trend needs at least one level");
  CheckReport last;
  std::vector<double> trend;
  for (int l : levels) {
    last = make(l);
    trend.push_back(last.constant);
  }
  last.trend_levels = levels;
  last.trend = trend;
  return last;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_reports_csv(const std::vector<CheckReport>& reports, std::ostream& os) {
  os << "id,constant,ceiling,pass,levels\n";
  for (const auto& r : reports) {
    os << r.id << ',' << format_number(r.constant) << ',' << format_number(r.ceiling) << ',' << (r.pass ? 1 : 0) << ',';
    for (size_t i = 0; i < r.trend.size(); ++i)
      os << (i ? ";" : "") << (i < r.trend_levels.size() ? std::to_string(r.trend_levels[i]) : "?") << ':'
         << format_number(r.trend[i]);
    os << '\n';
  }
}

}  // namespace driftbie
