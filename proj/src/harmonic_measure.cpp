#include "driftbie/harmonic_measure.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace driftbie {

// ---------------------------------------------------------------------------
// Philox4x32-10

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u, kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u, kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Block Philox4x32::apply(Block c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, c[0], hi0, lo0);
    mulhilo(kPhiloxM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return c;
}

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      counter_{0u, 0u, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

Philox4x32::result_type Philox4x32::operator()() {
  if (used_ == 4) {
    out_ = apply(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];
    used_ = 0;
  }
  return out_[used_++];
}

// ---------------------------------------------------------------------------
// exit sampling

namespace {

double default_step(const BoundaryMesh& mesh, const MeasureParams& p) {
  return p.step > 0 ? p.step : 1e-3 * mesh.diameter;
}

}  // namespace

ExitSample sample_exit(const BoundaryMesh& mesh, const Coefficients& coeffs, const Vec3& x0, Philox4x32& rng,
                       const MeasureParams& params) {
  const MeshLocator& loc = mesh.locator();
  bool inside = false;
  loc.clearance(x0, &inside);
  if (!inside) throw UsageError("exit sampling needs an interior starting point");
  const double h = default_step(mesh, params);
  const double s_min = params.min_step_fraction * h;
  const double layer = params.layer_width * h;
  const double trA = coeffs.A.trace();
  const double bn = coeffs.b.norm();
  const Mat3 sigma = std::sqrt(2.0) * coeffs.A_sqrt;
  std::normal_distribution<double> normal;

  ExitSample out;
  Vec3 x = x0;
  double d = loc.clearance(x, &inside);
  while (out.steps < params.max_steps) {
    const double s = d < layer ? std::max(s_min, d / params.layer_width) : std::max(h, params.far_fraction * d);
    double dt = s * s / (2.0 * trA);
    if (bn * dt > 0.5 * s) dt = 0.5 * s / bn;
    const Vec3 xi(normal(rng), normal(rng), normal(rng));
    const Vec3 x1 = x - dt * coeffs.b + std::sqrt(dt) * (sigma * xi);
    ++out.steps;
    const double d1 = loc.clearance(x1, &inside);
    if (inside) {
      x = x1;
      d = d1;
      continue;
    }
    // crossing on the segment, then the nearest boundary point
    Vec3 a = x, b = x1;
    for (int it = 0; it < 20; ++it) {
      const Vec3 m = 0.5 * (a + b);
      (loc.signed_distance(m) > 0 ? a : b) = m;
    }
    const ClosestPoint cp = loc.closest(0.5 * (a + b));
    out.panel = cp.panel;
    out.point = cp.point;
    return out;
  }
  out.timed_out = true;
  out.point = x;
  return out;
}

MeasureEstimate estimate_measure(const BoundaryMesh& mesh, const Coefficients& coeffs, const Vec3& x0, long long N,
                                 std::uint64_t seed, const MeasureParams& params) {
  if (N < 1000) throw UsageError("harmonic measure estimate needs at least 1000 paths");
  if (!strictly_interior(mesh, x0)) throw UsageError("base point must be strictly interior");
  std::vector<int> panel(N, -1);
  std::vector<long long> steps(N, 0);
  std::vector<Vec3> points;
  if (params.keep_exit_points) points.assign(N, Vec3::Zero());

#pragma omp parallel for schedule(static)
  for (long long i = 0; i < N; ++i) {
    Philox4x32 rng(seed, static_cast<std::uint64_t>(i));
    const ExitSample e = sample_exit(mesh, coeffs, x0, rng, params);
    panel[i] = e.timed_out ? -1 : e.panel;
    steps[i] = e.steps;
    if (params.keep_exit_points) points[i] = e.point;
  }

  MeasureEstimate est;
  est.x0 = x0;
  est.paths = N;
  est.seed = seed;
  est.step = default_step(mesh, params);
  est.counts.assign(mesh.num_panels(), 0);
  long long total_steps = 0;
  for (long long i = 0; i < N; ++i) {
    total_steps += steps[i];
    if (panel[i] < 0)
      ++est.timeouts;
    else
      ++est.counts[panel[i]];
  }
  est.exited = N - est.timeouts;
  est.mean_steps = static_cast<double>(total_steps) / static_cast<double>(N);
  if (est.timeouts > params.max_timeout_fraction * static_cast<double>(N)) {
    std::ostringstream os;
    os << est.timeouts << " of " << N << " paths exceeded " << params.max_steps << " steps";
    throw NumericalError(os.str());
  }
  const double n = static_cast<double>(est.exited);
  est.probabilities.resize(mesh.num_panels());
  est.std_errors.resize(mesh.num_panels());
  for (int j = 0; j < mesh.num_panels(); ++j) {
    const double p = static_cast<double>(est.counts[j]) / n;
    est.probabilities[j] = p;
    est.std_errors[j] = std::sqrt(p * (1 - p) / n);
  }
  if (params.keep_exit_points) {
    // timed-out paths carry no exit point
    for (long long i = 0; i < N; ++i)
      if (panel[i] >= 0) est.exit_points.push_back(points[i]);
  }
  return est;
}

double MeasureEstimate::fraction(const std::function<bool(const Vec3&)>& pred, double* std_error) const {
  if (exit_points.empty()) throw UsageError("exit points were not kept");
  long long hits = 0;
  for (const auto& p : exit_points) hits += pred(p) ? 1 : 0;
  const double n = static_cast<double>(exit_points.size());
  const double f = hits / n;
  if (std_error) *std_error = std::sqrt(f * (1 - f) / n);
  return f;
}

double MeasureEstimate::expectation(const BoundaryMesh& mesh, const std::function<double(const Vec3&)>& f,
                                    double* std_error) const {
  if (!exit_points.empty()) {
    double s = 0, s2 = 0;
    for (const auto& p : exit_points) {
      const double v = f(p);
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(exit_points.size());
    const double m = s / n;
    if (std_error) *std_error = std::sqrt(std::max(0.0, s2 / n - m * m) / n);
    return m;
  }
  double m = 0, m2 = 0;
  for (int j = 0; j < mesh.num_panels(); ++j) {
    const double v = f(mesh.panels[j].centroid);
    m += probabilities[j] * v;
    m2 += probabilities[j] * v * v;
  }
  if (std_error) *std_error = std::sqrt(std::max(0.0, m2 - m * m) / static_cast<double>(exited));
  return m;
}

// ---------------------------------------------------------------------------
// Green representation

double GreenKernel::green(const Vec3& y) const { return (*adjoint_green)(y, x0); }

Vec GreenKernel::panel_integrals(bool coarse) const {
  const BoundaryMesh& mesh = *k.mesh;
  const bool use_parent = coarse && !mesh.parent.empty();
  Vec out = Vec::Zero(use_parent ? mesh.coarse_panel_count : mesh.num_panels());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const int j = mesh.node_panel[i];
    out[use_parent ? mesh.parent[j] : j] += mesh.weights[i] * k.values[i];
  }
  return out;
}

GreenKernel green_kernel(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x0, const SolverOptions& opts) {
  if (!strictly_interior(*mesh, x0)) throw UsageError("base point must be strictly interior");
  const Coefficients adj = coeffs.adjoint();
  GreenKernel out;
  out.x0 = x0;
  out.adjoint_green = std::make_shared<DomainGreen>(std::make_shared<const SingleLayerSystem>(mesh, adj, opts));
  // G^t(., x0) = Gamma^t(., x0) - S_t g; the conormal of the smooth corrector S_t g is extrapolated
  // from the interior, which avoids the O(h) flat-panel error of (1/2 + K*_t) g
  Solution corr;
  corr.mesh = mesh;
  corr.coeffs = adj;
  corr.quad = opts.quad;
  corr.density = out.adjoint_green->corrector_density(x0);
  const BoundaryField dw = interior_conormal(corr);
  const Kernel K(adj);
  const int N = mesh->num_nodes();
  Vec k(N);
  for (int i = 0; i < N; ++i) {
    const Vec3& nu = mesh->panels[mesh->node_panel[i]].normal;
    const double direct = (coeffs.A * K.gradient(mesh->nodes[i] - x0)).dot(nu);
    k[i] = -direct + dw.values[i];
  }
  out.k = BoundaryField(mesh, std::move(k));
  out.total = 0.0;
  for (int i = 0; i < N; ++i) out.total += mesh->weights[i] * out.k.values[i];
  return out;
}

BoundaryField kernel_via_green(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x0,
                               const SolverOptions& opts) {
  return green_kernel(mesh, coeffs, x0, opts).k;
}

double measure_of(const BoundaryMesh& mesh, const BoundaryField& k, const std::vector<int>& panels) {
  // node lists per panel are contiguous
  const int npp = mesh.nodes_per_panel;
  double s = 0.0;
  for (int j : panels)
    for (int a = 0; a < npp; ++a) {
      const int i = j * npp + a;
      s += mesh.weights[i] * k.values[i];
    }
  return s;
}

BallMoments ball_moments(const BoundaryMesh& mesh, const BoundaryField& k, const Vec3& q, double r) {
  constexpr int n = 8;  // sub-triangles per edge on panels cut by the sphere |x - q| = r
  const int npp = mesh.nodes_per_panel;
  BallMoments m;
  double basis[3];
  for (int j : surface_ball(mesh, q, r + mesh.panel_size())) {
    const Panel& P = mesh.panels[j];
    bool all_in = true, all_out = true;
    for (const auto& v : P.v) {
      const bool in = (v - q).norm() <= r;
      all_in = all_in && in;
      all_out = all_out && !in;
    }
    if (all_out && closest_point_on_triangle(q, P.v[0], P.v[1], P.v[2]).distance > r) continue;
    if (all_in) {
      for (int a = 0; a < npp; ++a) {
        const int i = j * npp + a;
        const double kv = k.values[i];
        m.area += mesh.weights[i];
        m.m1 += mesh.weights[i] * kv;
        m.m2 += mesh.weights[i] * kv * kv;
      }
      continue;
    }
    const double w = P.area / (n * n);
    const Vec3 e1 = (P.v[1] - P.v[0]) / n, e2 = (P.v[2] - P.v[0]) / n;
    for (int a = 0; a < n; ++a)
      for (int b = 0; a + b < n; ++b)
        for (int up = 0; up < (a + b < n - 1 ? 2 : 1); ++up) {
          const double t = up ? 2.0 / 3.0 : 1.0 / 3.0;
          const Vec3 y = P.v[0] + (a + t) * e1 + (b + t) * e2;
          if ((y - q).norm() > r) continue;
          mesh.basis(j, y, basis);
          double kv = 0;
          for (int c = 0; c < npp; ++c) kv += basis[c] * k.values[j * npp + c];
          m.area += w;
          m.m1 += w * kv;
          m.m2 += w * kv * kv;
        }
  }
  return m;
}

// ---------------------------------------------------------------------------
// structural checks

std::string to_string(StructureCheck c) {
  switch (c) {
    case StructureCheck::doubling: return "doubling";
    case StructureCheck::b2: return "b2";
    case StructureCheck::green_comparison: return "green-comparison";
    case StructureCheck::comparison_principle: return "comparison-principle";
  }
  return "?";
}

StructureCheck parse_structure_check(const std::string& name) {
  for (auto c : {StructureCheck::doubling, StructureCheck::b2, StructureCheck::green_comparison,
                 StructureCheck::comparison_principle})
    if (to_string(c) == name) return c;
  throw InputError("unknown structure check '" + name + "'");
}

std::vector<double> dyadic_radii(const BoundaryMesh& mesh, double r_min_panels) {
  const double r0 = r_min_panels * mesh.panel_size();
  const double rmax = mesh.r_omega_estimate;
  std::vector<double> out;
  for (double r = r0; r <= rmax * (1 + 1e-12); r *= 2) out.push_back(r);
  if (out.empty()) out.push_back(rmax);
  return out;
}

std::vector<Vec3> check_centers(const BoundaryMesh& mesh, int count) {
  const int P = mesh.num_panels();
  count = std::max(1, std::min(count, P));
  std::vector<Vec3> out;
  for (int c = 0; c < count; ++c) {
    const long long j = (static_cast<long long>(2 * c + 1) * P) / (2LL * count);
    out.push_back(mesh.panels[static_cast<int>(j)].centroid);
  }
  return out;
}

namespace {

// Boundary point on the ray from q through the interior point.
Vec3 far_side_point(const BoundaryMesh& mesh, const Vec3& q) {
  const MeshLocator& loc = mesh.locator();
  Vec3 dir = mesh.interior_point - q;
  dir.normalize();
  Vec3 a = mesh.interior_point;
  double t = mesh.diameter;
  Vec3 b = a + t * dir;
  for (int it = 0; it < 60; ++it) {
    const Vec3 m = 0.5 * (a + b);
    (loc.signed_distance(m) > 0 ? a : b) = m;
  }
  return loc.closest(0.5 * (a + b)).point;
}

struct BallPair {
  Vec3 q;
  double r;
};

std::vector<BallPair> ball_pairs(const StructureInputs& in, std::vector<double>* radii_out) {
  const BoundaryMesh& mesh = *in.mesh;
  std::vector<double> radii = dyadic_radii(mesh, in.r_min_panels);
  if (in.r_cap > 0) {
    std::vector<double> kept;
    for (double r : radii)
      if (r <= in.r_cap * (1 + 1e-12)) kept.push_back(r);
    radii = kept;
  }
  if (radii_out) *radii_out = radii;
  std::vector<BallPair> out;
  for (const Vec3& q : check_centers(mesh, in.centers))
    for (double r : radii) out.push_back({q, r});
  return out;
}

std::string structure_digest(const StructureInputs& in, StructureCheck check) {
  std::ostringstream os;
  os.precision(17);
  const BoundaryMesh& m = *in.mesh;
  os << to_string(check) << '|' << to_string(m.spec.kind) << '|' << m.spec.scale << '|' << m.spec.refinement_level << '|'
     << m.spec.flat_subdivisions << '|' << m.spec.quadrature_order << '|' << in.coeffs.A.reshaped().transpose() << '|'
     << in.coeffs.b.transpose() << '|' << in.x0.transpose() << '|' << in.r_min_panels << '|' << in.r_cap << '|'
     << in.centers;
  return hex_digest(os.str());
}

}  // namespace

Vec3 far_pole(const BoundaryMesh& mesh, const Vec3& q, double r) {
  const Vec3 qs = far_side_point(mesh, q);
  return corkscrew_point(mesh, qs, std::min(8.0 * r, mesh.r_omega_estimate)).point;
}

std::vector<Vec3> tent_samples(const BoundaryMesh& mesh, const Vec3& q, double r, double clearance) {
  const Vec3 n = averaged_inward_normal(mesh, q, r);
  const Vec3 e1 = n.unitOrthogonal();
  const Vec3 e2 = n.cross(e1);
  std::vector<Vec3> out;
  const MeshLocator& loc = mesh.locator();
  for (double rho : {0.35, 0.65, 0.95})
    for (double theta : {0.0, kPi / 6, kPi / 3}) {
      const int naz = theta == 0.0 ? 1 : 6;
      for (int a = 0; a < naz; ++a) {
        const double phi = 2 * kPi * a / naz;
        const Vec3 x = q + rho * r * (std::cos(theta) * n + std::sin(theta) * (std::cos(phi) * e1 + std::sin(phi) * e2));
        if (loc.signed_distance(x) >= clearance) out.push_back(x);
      }
    }
  return out;
}

CheckReport measure_structure_checks(StructureInputs& in, StructureCheck check) {
  if (!in.mesh) throw UsageError("structure check without a mesh");
  const BoundaryMesh& mesh = *in.mesh;
  CheckReport rep;
  rep.id = to_string(check);
  rep.inputs_digest = structure_digest(in, check);
  rep.ceiling = in.ceiling;
  const bool needs_kernel = check == StructureCheck::doubling || check == StructureCheck::b2 ||
                            check == StructureCheck::green_comparison;
  if (needs_kernel && (!in.kernel.mesh || in.kernel.size() != mesh.num_nodes()))
    throw UsageError(rep.id + " check needs the kernel on the check mesh");

  std::vector<double> radii;
  const auto pairs = ball_pairs(in, &radii);
  int skipped = 0, used = 0;
  double vmax = -std::numeric_limits<double>::infinity(), vmin = std::numeric_limits<double>::infinity();
  auto note_skip = [&](const BallPair& p, const std::string& why) {
    ++skipped;
    if (skipped <= 5) {
      std::ostringstream os;
      os << "skipped (q=" << p.q.transpose() << ", r=" << p.r << "): " << why;
      rep.notes.push_back(os.str());
    }
  };

  std::shared_ptr<DomainGreen> G;
  if (check == StructureCheck::comparison_principle) {
    G = in.domain_green;
    if (!G) {
      G = std::make_shared<DomainGreen>(std::make_shared<const SingleLayerSystem>(in.mesh, in.coeffs, in.solver));
      in.domain_green = G;
    }
  }
  if (check == StructureCheck::green_comparison && !in.green)
    throw UsageError("green-comparison needs the Green kernel of the base point");

  for (const auto& p : pairs) {
    switch (check) {
      case StructureCheck::doubling: {
        const BallMoments b1 = ball_moments(mesh, in.kernel, p.q, p.r);
        if (!(b1.area > 0)) {
          note_skip(p, "empty surface ball");
          continue;
        }
        const double w1 = b1.m1;
        const double w2 = ball_moments(mesh, in.kernel, p.q, 2 * p.r).m1;
        if (!(w1 > 0)) {
          note_skip(p, "non-positive measure");
          continue;
        }
        const double ratio = w2 / w1;
        vmax = std::max(vmax, ratio);
        vmin = std::min(vmin, ratio);
        break;
      }
      case StructureCheck::b2: {
        const BallMoments b = ball_moments(mesh, in.kernel, p.q, p.r);
        const double w = b.area, m1 = b.m1, m2 = b.m2;
        if (!(w > 0) || !(m1 > 0)) {
          note_skip(p, !(w > 0) ? "empty surface ball" : "non-positive mean kernel");
          continue;
        }
        const double ratio = std::sqrt(m2 / w) / (m1 / w);
        vmax = std::max(vmax, ratio);
        vmin = std::min(vmin, ratio);
        break;
      }
      case StructureCheck::green_comparison: {
        const BallMoments ball = ball_moments(mesh, in.kernel, p.q, p.r);
        if (!(ball.area > 0)) {
          note_skip(p, "empty surface ball");
          continue;
        }
        const CorkscrewPoint A = corkscrew_point(mesh, p.q, p.r);
        if ((A.point - in.x0).norm() < mesh.panel_size()) {
          note_skip(p, "corkscrew point coincides with the base point");
          continue;
        }
        const double g = in.green->green(A.point);
        const double w = ball.m1;
        if (!(g > 0) || !(w > 0)) {
          note_skip(p, "non-positive Green value or measure");
          continue;
        }
        const double ratio = w / (p.r * g);  // r^{d-2} with d = 3
        vmax = std::max(vmax, ratio);
        vmin = std::min(vmin, ratio);
        break;
      }
      case StructureCheck::comparison_principle: {
        const Vec3 y1 = far_pole(mesh, p.q, p.r);
        const Vec3 qs = far_side_point(mesh, p.q);
        // second pole halfway to the far side, kept clear of the boundary for the corrector solve
        const double room = (y1 - qs).norm();
        const double clear = (DomainGreen::kPoleMargin + 0.5) * mesh.panel_size();
        Vec3 y2 = qs + std::max(0.5, std::min(1.0, clear / room)) * (y1 - qs);
        // coarse meshes: the segment is too short, fall back to the domain's interior point
        if ((y1 - y2).norm() < mesh.panel_size()) y2 = mesh.interior_point;
        if ((y1 - y2).norm() < mesh.panel_size()) {
          note_skip(p, "poles coincide");
          continue;
        }
        std::vector<Vec3> xs = tent_samples(mesh, p.q, p.r, mesh.panel_size());
        if (xs.empty()) {
          note_skip(p, "no tent samples clear of the boundary");
          continue;
        }
        xs.push_back(corkscrew_point(mesh, p.q, p.r).point);
        Vec u, v;
        try {
          u = G->values(xs, y1);
          v = G->values(xs, y2);
        } catch (const Error& e) {
          note_skip(p, e.what());
          continue;
        }
        if ((u.array() <= 0).any() || (v.array() <= 0).any()) {
          rep.notes.push_back("non-positive Green samples; check aborted");
          rep.constant = std::numeric_limits<double>::quiet_NaN();
          rep.pass = false;
          return rep;
        }
        const int n = static_cast<int>(xs.size()) - 1;
        const double ref = u[n] / v[n];
        for (int i = 0; i < n; ++i) {
          const double R = u[i] / v[i] / ref;
          vmax = std::max(vmax, R);
          vmin = std::min(vmin, R);
        }
        break;
      }
    }
    ++used;
  }

  rep.constants["pairs"] = used;
  rep.constants["skipped"] = skipped;
  rep.constants["radii"] = static_cast<double>(radii.size());
  if (!radii.empty()) {
    rep.constants["r_min"] = radii.front();
    rep.constants["r_max"] = radii.back();
  }
  if (skipped > 5) rep.notes.push_back(std::to_string(skipped - 5) + " further pairs skipped");
  if (used == 0) {
    rep.notes.push_back("no admissible (q, r) pairs");
    rep.constant = std::numeric_limits<double>::quiet_NaN();
    rep.pass = false;
    return rep;
  }
  rep.constants["max"] = vmax;
  rep.constants["min"] = vmin;
  switch (check) {
    case StructureCheck::doubling:
    case StructureCheck::b2: rep.constant = vmax; break;
    case StructureCheck::green_comparison: rep.constant = vmax / vmin; break;
    case StructureCheck::comparison_principle: rep.constant = std::max(vmax, 1.0 / vmin); break;
  }
  rep.judge();
  return rep;
}

Vec hardy_littlewood_maximal(const BoundaryMesh& mesh, const BoundaryField& k, const Vec& f,
                             const std::vector<double>& radii) {
  const int N = mesh.num_nodes();
  const int npp = mesh.nodes_per_panel;
  Vec out = Vec::Zero(N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    double best = 0.0;
    for (double r : radii) {
      double w = 0, s = 0;
      for (int j : surface_ball(mesh, mesh.nodes[i], r))
        for (int a = 0; a < npp; ++a) {
          const int n = j * npp + a;
          w += mesh.weights[n] * k.values[n];
          s += mesh.weights[n] * k.values[n] * std::abs(f[n]);
        }
      if (w > 0) best = std::max(best, s / w);
    }
    out[i] = best;
  }
  return out;
}

}  // namespace driftbie
