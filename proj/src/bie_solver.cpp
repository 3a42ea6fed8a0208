#include "driftbie/bie_solver.hpp"

#include "driftbie/quadrature.hpp"

#include <random>
#include <sstream>

namespace driftbie {

// ---------------------------------------------------------------------------
// SingleLayerSystem

SingleLayerSystem::SingleLayerSystem(MeshPtr mesh, const Coefficients& coeffs, const SolverOptions& opts)
    : mesh_(std::move(mesh)), coeffs_(coeffs), opts_(opts) {
  const int N = mesh_->num_nodes();
  auto M = assemble_boundary(*mesh_, coeffs_, opts_.quad, {true, true, false, false});
  S_ = std::move(M.S);
  G_ = std::move(M.G);
  if (!S_.allFinite() || !G_.allFinite()) throw NumericalError("single layer assembly produced non-finite entries");
  wsqrt_.resize(N);
  for (int i = 0; i < N; ++i) wsqrt_[i] = std::sqrt(mesh_->weights[i]);

  // W^{-1/2} M^T W3 M W^{-1/2}, accumulated from row blocks of W3^{1/2} M W^{-1/2}
  factor_.setZero(N, N);
  const int bs = 128;
  Eigen::MatrixXd blk;
  for (int r0 = 0; r0 < 3 * N; r0 += bs) {
    const int nr = std::min(bs, 3 * N - r0);
    blk.resize(N, nr);
    for (int c = 0; c < nr; ++c) {
      const int r = r0 + c;
      const double rw = r < N ? wsqrt_[r] : wsqrt_[(r - N) / 2];
      const auto row = r < N ? S_.row(r) : G_.row(r - N);
      blk.col(c) = rw * row.transpose().cwiseQuotient(wsqrt_);
    }
    factor_.selfadjointView<Eigen::Lower>().rankUpdate(blk);
  }
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(factor_);
  if (llt.info() != Eigen::Success) throw NumericalError("normal matrix is not positive definite (singular system)");
  const double rc = llt.rcond();
  condition_ = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(condition_ <= opts_.max_condition)) {
    std::ostringstream os;
    os << "ill-conditioned single layer system: condition estimate " << condition_ << " exceeds "
       << opts_.max_condition << " (mesh too coarse or degenerate coefficients)";
    throw NumericalError(os.str());
  }
}

Vec SingleLayerSystem::solve_normal(const Vec& rhs) const {
  // rhs is in the unscaled variables; scale, solve, unscale
  Vec y = rhs.cwiseQuotient(wsqrt_);
  const auto L = factor_.triangularView<Eigen::Lower>();
  L.solveInPlace(y);
  L.transpose().solveInPlace(y);
  return y.cwiseQuotient(wsqrt_);
}

Vec SingleLayerSystem::solve_w12(const Vec& f, const Grad2& df, double* residual) const {
  const int N = mesh_->num_nodes();
  const Eigen::Map<const Vec> w(mesh_->weights.data(), N);
  Vec g2(2 * N);
  Vec w2(2 * N);
  for (int i = 0; i < N; ++i) {
    g2[2 * i] = df(i, 0);
    g2[2 * i + 1] = df(i, 1);
    w2[2 * i] = w2[2 * i + 1] = w[i];
  }
  const Vec rhs = S_.transpose() * w.cwiseProduct(f) + G_.transpose() * w2.cwiseProduct(g2);
  Vec g = solve_normal(rhs);
  if (residual) {
    const Vec r1 = S_ * g - f, r2 = G_ * g - g2;
    const double num = w.dot(r1.cwiseAbs2()) + w2.dot(r2.cwiseAbs2());
    const double den = w.dot(f.cwiseAbs2()) + w2.dot(g2.cwiseAbs2());
    *residual = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  return g;
}

Vec SingleLayerSystem::apply_s_star(const Vec& h, const Grad2& g) const {
  const int N = mesh_->num_nodes();
  const Eigen::Map<const Vec> w(mesh_->weights.data(), N);
  Vec g2(2 * N), w2(2 * N);
  for (int i = 0; i < N; ++i) {
    g2[2 * i] = g(i, 0);
    g2[2 * i + 1] = g(i, 1);
    w2[2 * i] = w2[2 * i + 1] = w[i];
  }
  return (S_.transpose() * w.cwiseProduct(h) + G_.transpose() * w2.cwiseProduct(g2)).cwiseQuotient(w);
}

Vec SingleLayerSystem::solve_adjoint(const Vec& f, double* residual) const {
  const int N = mesh_->num_nodes();
  const Eigen::Map<const Vec> w(mesh_->weights.data(), N);
  Vec z = solve_normal(w.cwiseProduct(f));
  if (residual) {
    const Vec h = S_ * z, g2 = G_ * z;
    Grad2 g(N, 2);
    for (int i = 0; i < N; ++i) g.row(i) << g2[2 * i], g2[2 * i + 1];
    const Vec r = apply_s_star(h, g) - f;
    const double den = w.dot(f.cwiseAbs2());
    *residual = den > 0 ? std::sqrt(w.dot(r.cwiseAbs2()) / den) : std::sqrt(w.dot(r.cwiseAbs2()));
  }
  return z;
}

// ---------------------------------------------------------------------------
// solvers

Solution solve_regularity(const SingleLayerSystem& sys, const BoundaryField& f) {
  f.check();
  if (f.mesh->num_nodes() != sys.mesh()->num_nodes()) throw UsageError("data does not match the system mesh");
  if (!f.has_gradient()) throw UsageError("regularity data needs tangential gradient samples");
  Solution s;
  s.kind = SolutionKind::regularity;
  s.mesh = sys.mesh();
  s.coeffs = sys.coeffs();
  s.quad = sys.options().quad;
  s.density = sys.solve_w12(f.values, *f.tangential_gradient, &s.residual);
  s.boundary_data = f;
  s.condition_estimate = sys.condition_estimate();
  if (!s.density.allFinite()) throw NumericalError("regularity solve produced non-finite density");
  return s;
}

Solution solve_regularity(const MeshPtr& mesh, const Coefficients& coeffs, const BoundaryField& f,
                          const SolverOptions& opts) {
  return solve_regularity(SingleLayerSystem(mesh, coeffs, opts), f);
}

Solution solve_dirichlet_adjoint(const SingleLayerSystem& sys, const BoundaryField& f) {
  f.check();
  if (f.mesh->num_nodes() != sys.mesh()->num_nodes()) throw UsageError("data does not match the system mesh");
  const BoundaryMesh& mesh = *sys.mesh();
  const int N = mesh.num_nodes();
  Solution s;
  s.kind = SolutionKind::adjoint_dirichlet;
  s.mesh = sys.mesh();
  // u solves L^t u = 0; store the coefficients of L, whose S this is
  s.coeffs = sys.coeffs();
  s.quad = sys.options().quad;
  const Vec z = sys.solve_adjoint(f.values, &s.residual);
  s.density = sys.S() * z;
  const Vec g2 = sys.G() * z;
  Grad2 g(N, 2);
  for (int i = 0; i < N; ++i) g.row(i) << g2[2 * i], g2[2 * i + 1];
  s.density_gradient = from_frame(mesh, g);
  s.boundary_data = f;
  s.condition_estimate = sys.condition_estimate();
  if (!s.density.allFinite()) throw NumericalError("adjoint solve produced non-finite density");
  return s;
}

Solution solve_dirichlet_adjoint(const MeshPtr& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                 const SolverOptions& opts) {
  return solve_dirichlet_adjoint(SingleLayerSystem(mesh, coeffs, opts), f);
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

void require_interior(const BoundaryMesh& mesh, const std::vector<Vec3>& pts) {
  for (const auto& x : pts)
    if (!strictly_interior(mesh, x, 1e-12 * mesh.diameter))
      throw UsageError("evaluation point is not strictly interior");
}

}  // namespace

void evaluate_with_gradient(const Solution& sol, const std::vector<Vec3>& points, Vec& values,
                            std::vector<Vec3>& gradients) {
  require_interior(*sol.mesh, points);
  const int n = static_cast<int>(points.size());
  values.resize(n);
  gradients.assign(n, Vec3::Zero());
  if (sol.kind == SolutionKind::regularity) {
    const PotentialEvaluator ev(*sol.mesh, sol.coeffs, sol.quad);
    const Mat F = sol.density;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      Mat g;
      values[i] = ev.single_layer(points[i], F, &g)[0];
      gradients[i] = g.row(0).transpose();
    }
  } else {
    const PotentialEvaluator ev(*sol.mesh, sol.coeffs.adjoint(), sol.quad);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) values[i] = ev.pair_potential(points[i], sol.density, sol.density_gradient, &gradients[i]);
  }
}

Vec evaluate(const Solution& sol, const std::vector<Vec3>& points) {
  require_interior(*sol.mesh, points);
  const int n = static_cast<int>(points.size());
  Vec out(n);
  if (sol.kind == SolutionKind::regularity) {
    const PotentialEvaluator ev(*sol.mesh, sol.coeffs, sol.quad);
    const Mat F = sol.density;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) out[i] = ev.single_layer(points[i], F, nullptr)[0];
  } else {
    const PotentialEvaluator ev(*sol.mesh, sol.coeffs.adjoint(), sol.quad);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) out[i] = ev.pair_potential(points[i], sol.density, sol.density_gradient, nullptr);
  }
  return out;
}

std::vector<Vec3> gradient_evaluate(const Solution& sol, const std::vector<Vec3>& points) {
  Vec v;
  std::vector<Vec3> g;
  evaluate_with_gradient(sol, points, v, g);
  return g;
}

// ---------------------------------------------------------------------------
// domain Green function

DomainGreen::DomainGreen(std::shared_ptr<const SingleLayerSystem> sys) : sys_(std::move(sys)) {}

const Vec& DomainGreen::corrector_density(const Vec3& y) const {
  const std::array<double, 3> key{y[0], y[1], y[2]};
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const BoundaryMesh& mesh = *sys_->mesh();
  if (!strictly_interior(mesh, y, kPoleMargin * mesh.panel_size()))
    throw UsageError("Green pole too close to the boundary (needs two panel sizes of clearance)");
  const int N = mesh.num_nodes();
  Vec f(N);
  Grad2 df(N, 2);
  const Kernel K(sys_->coeffs());
  for (int i = 0; i < N; ++i) {
    const Vec3 z = mesh.nodes[i] - y;
    double v;
    Vec3 g;
    K.value_gradient(z, v, g);
    f[i] = v;
    df.row(i) = mesh.to_frame(i, g).transpose();
  }
  double res = 0;
  Vec g = sys_->solve_w12(f, df, &res);
  return cache_.emplace(key, std::move(g)).first->second;
}

Vec DomainGreen::values(const std::vector<Vec3>& xs, const Vec3& y) const {
  const BoundaryMesh& mesh = *sys_->mesh();
  for (const auto& x : xs) {
    if (!strictly_interior(mesh, x)) throw UsageError("Green function argument is not interior");
    if ((x - y).norm() < kPoleGuard * std::max({1.0, x.norm(), y.norm()}))
      throw PoleError("Green function evaluated at its pole");
  }
  const Mat F = corrector_density(y);
  const PotentialEvaluator ev(mesh, sys_->coeffs(), sys_->options().quad);
  const Kernel K(sys_->coeffs());
  const int n = static_cast<int>(xs.size());
  Vec out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = K.value(xs[i] - y) - ev.single_layer(xs[i], F, nullptr)[0];
  return out;
}

double DomainGreen::operator()(const Vec3& x, const Vec3& y) const { return values({x}, y)[0]; }

double domain_green(const MeshPtr& mesh, const Coefficients& coeffs, const Vec3& x, const Vec3& y,
                    const SolverOptions& opts) {
  if ((x - y).norm() < kPoleGuard * std::max({1.0, x.norm(), y.norm()}))
    throw PoleError("Green function evaluated at its pole");
  DomainGreen G(std::make_shared<const SingleLayerSystem>(mesh, coeffs, opts));
  return G(x, y);
}

// ---------------------------------------------------------------------------
// symmetrization

double weak_form_residual(const Coefficients& full, const Coefficients& sym, const Eigen::AlignedBox3d& box,
                          const std::function<double(const Vec3&, Vec3*)>& u,
                          const std::function<double(const Vec3&, Vec3*)>& phi, int points_per_axis) {
  const LineRule& g = gauss_legendre(points_per_axis);
  const Vec3 lo = box.min(), ext = box.sizes();
  const double vol = ext.prod();
  double a_full = 0, a_sym = 0, scale = 0;
  for (int i = 0; i < points_per_axis; ++i)
    for (int j = 0; j < points_per_axis; ++j)
      for (int k = 0; k < points_per_axis; ++k) {
        const Vec3 x = lo + Vec3(g.x[i] * ext[0], g.x[j] * ext[1], g.x[k] * ext[2]);
        const double w = g.w[i] * g.w[j] * g.w[k] * vol;
        Vec3 du, dp;
        u(x, &du);
        const double p = phi(x, &dp);
        Mat3 Af = full.A;
        if (full.antisym_affine)
          for (int s = 0; s < 3; ++s) Af += x[s] * (*full.antisym_affine)[s];
        const double tf = dp.dot(Af * du) + full.b.dot(du) * p;
        const double ts = dp.dot(sym.A * du) + sym.b.dot(du) * p;
        a_full += w * tf;
        a_sym += w * ts;
        scale += w * (std::abs(dp.dot(Af * du)) + std::abs(full.b.dot(du) * p));
      }
  return std::abs(a_full - a_sym) / std::max(scale, 1e-300);
}

Symmetrized symmetrize_operator(const Coefficients& coeffs, const Eigen::AlignedBox3d& box, std::uint64_t seed) {
  Symmetrized out;
  if (!coeffs.antisym_affine) {
    out.coeffs = Coefficients::make(coeffs.A, coeffs.b);
    return out;
  }
  const auto& C = *coeffs.antisym_affine;
  // b_tilde_i = 1/2 sum_j d_j (a_ij - a_ji) = sum_j C_j(i, j) for antisymmetric slices
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.b_tilde[i] += 0.5 * (C[j](i, j) - C[j](j, i));
  out.divergence = 0.0;  // constant field
  // ellipticity of A_full on the box: its symmetric part is A, checked at the corners anyway
  for (int c = 0; c < 8; ++c) {
    const Vec3 x = box.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c));
    Mat3 Af = coeffs.A;
    for (int s = 0; s < 3; ++s) Af += x[s] * C[s];
    const double lmin = Eigen::SelfAdjointEigenSolver<Mat3>(0.5 * (Af + Af.transpose())).eigenvalues().minCoeff();
    if (!(lmin > 0)) throw InputError("affine coefficient matrix is not elliptic on the domain box");
  }
  out.coeffs = Coefficients::make(coeffs.A, coeffs.b + out.b_tilde);

  const Vec3 lo = box.min(), hi = box.max(), mid = box.center();
  const double s = 0.1 * box.sizes().minCoeff();
  auto bump = [mid, s](const Vec3& x, Vec3* g) {
    const double v = std::exp(-(x - mid).squaredNorm() / (s * s));
    *g = -2.0 / (s * s) * v * (x - mid);
    return v;
  };
  auto x1x2 = [](const Vec3& x, Vec3* g) {
    *g = Vec3(x[1], x[0], 0);
    return x[0] * x[1];
  };
  out.weak_form_residual = weak_form_residual(coeffs, out.coeffs, box, x1x2, bump, 40);

  // random cubic u against cubic phi times a bubble vanishing with its gradient on the box boundary
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto cubic = [&]() {
    std::vector<std::array<int, 3>> exps;
    std::vector<double> coef;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; a + b <= 3; ++b)
        for (int c = 0; a + b + c <= 3; ++c) {
          exps.push_back({a, b, c});
          coef.push_back(U(rng));
        }
    return [exps, coef](const Vec3& x, Vec3* g) {
      double v = 0;
      Vec3 gr = Vec3::Zero();
      for (size_t t = 0; t < exps.size(); ++t) {
        const auto& e = exps[t];
        const double m = std::pow(x[0], e[0]) * std::pow(x[1], e[1]) * std::pow(x[2], e[2]);
        v += coef[t] * m;
        for (int d = 0; d < 3; ++d)
          if (e[d] > 0) {
            double md = e[d];
            for (int q = 0; q < 3; ++q) md *= std::pow(x[q], q == d ? e[q] - 1 : e[q]);
            gr[d] += coef[t] * md;
          }
      }
      if (g) *g = gr;
      return v;
    };
  };
  for (int trial = 0; trial < 3; ++trial) {
    auto u = cubic();
    auto p = cubic();
    auto phi = [p, lo, hi](const Vec3& x, Vec3* g) {
      Vec3 gp;
      const double pv = p(x, &gp);
      double b = 1.0;
      Vec3 gb;
      double f[3], df[3];
      for (int d = 0; d < 3; ++d) {
        const double t = (x[d] - lo[d]) * (hi[d] - x[d]);
        f[d] = t * t;
        df[d] = 2 * t * (hi[d] + lo[d] - 2 * x[d]);
        b *= f[d];
      }
      for (int d = 0; d < 3; ++d) gb[d] = df[d] * f[(d + 1) % 3] * f[(d + 2) % 3];
      *g = gp * b + pv * gb;
      return pv * b;
    };
    out.weak_form_residual = std::max(out.weak_form_residual, weak_form_residual(coeffs, out.coeffs, box, u, phi, 8));
  }
  return out;
}

// ---------------------------------------------------------------------------
// nontangential maximal function

BoundaryField nontangential_maximal(const Solution& sol, MaximalOf which, const ConeParams& cone) {
  const BoundaryMesh& mesh = *sol.mesh;
  const int N = mesh.num_nodes();
  std::vector<Vec3> pts;
  std::vector<int> owner;
  for (int i = 0; i < N; ++i) {
    const Cone c = cone_samples(mesh, mesh.nodes[i], cone);
    for (const auto& x : c.sample_points) {
      pts.push_back(x);
      owner.push_back(i);
    }
  }
  Vec vals;
  std::vector<Vec3> grads;
  if (which == MaximalOf::u)
    vals = evaluate(sol, pts);
  else
    evaluate_with_gradient(sol, pts, vals, grads);
  Vec out = Vec::Zero(N);
  std::vector<char> seen(N, 0);
  for (size_t k = 0; k < pts.size(); ++k) {
    const double v = which == MaximalOf::u ? std::abs(vals[k]) : grads[k].norm();
    const int i = owner[k];
    out[i] = seen[i] ? std::max(out[i], v) : v;
    seen[i] = 1;
  }
  BoundaryField f(sol.mesh, std::move(out));
  f.excluded.assign(N, 0);
  bool any = false;
  for (int i = 0; i < N; ++i)
    if (!seen[i]) f.excluded[i] = any = 1;
  if (!any) f.excluded.clear();
  return f;
}

BoundaryField interior_conormal(const Solution& sol) {
  if (sol.kind != SolutionKind::regularity) throw UsageError("conormal traces need a single layer solution");
  const BoundaryMesh& mesh = *sol.mesh;
  const int N = mesh.num_nodes(), npp = mesh.nodes_per_panel;
  const double h = mesh.panel_size();
  // Quadratic extrapolation of <A grad u, nu> along the inward normal from depths d0, d0 + h, d0 + 2h.
  // The flat-panel K* carries an O(h) curvature error that this avoids.
  const std::array<double, 3> d = {1.5 * h, 2.5 * h, 3.5 * h};
  std::array<double, 3> lag;
  for (int k = 0; k < 3; ++k) {
    lag[k] = 1.0;
    for (int l = 0; l < 3; ++l)
      if (l != k) lag[k] *= d[l] / (d[l] - d[k]);
  }
  std::vector<Vec3> pts;
  std::vector<char> usable(N, 1);
  pts.reserve(3 * N);
  for (int i = 0; i < N; ++i) {
    const Vec3& nu = mesh.panels[i / npp].normal;
    for (double di : d) {
      const Vec3 x = mesh.nodes[i] - di * nu;
      if (mesh.locator().signed_distance(x) < 0.5 * di) usable[i] = 0;
      pts.push_back(x);
    }
  }
  std::vector<Vec3> keep;
  for (int i = 0; i < N; ++i)
    if (usable[i])
      for (int k = 0; k < 3; ++k) keep.push_back(pts[3 * i + k]);
  const auto g = gradient_evaluate(sol, keep);
  BoundaryField out(sol.mesh, Vec::Zero(N));
  bool fallback = false;
  for (int i = 0, c = 0; i < N; ++i) {
    if (!usable[i]) {
      fallback = true;
      continue;
    }
    const Vec3 Anu = sol.coeffs.A.transpose() * mesh.panels[i / npp].normal;
    for (int k = 0; k < 3; ++k) out.values[i] += lag[k] * g[c++].dot(Anu);
  }
  if (fallback) {
    // nodes too close to an edge or corner for the normal ray: one-sided trace of the layer
    BoundaryField dens(sol.mesh, sol.density);
    const BoundaryField pv = conormal_pv(mesh, sol.coeffs, dens, sol.quad);
    for (int i = 0; i < N; ++i)
      if (!usable[i]) out.values[i] = pv.values[i] + 0.5 * sol.density[i];
  }
  return out;
}

}  // namespace driftbie
