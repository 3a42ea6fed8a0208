#include "driftbie/layer_potentials.hpp"

#include "driftbie/quadrature.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace driftbie {

BoundaryField::BoundaryField(MeshPtr m, Vec v) : mesh(std::move(m)), values(std::move(v)) { check(); }

BoundaryField::BoundaryField(MeshPtr m, Vec v, Grad2 g)
    : mesh(std::move(m)), values(std::move(v)), tangential_gradient(std::move(g)) {
  check();
}

void BoundaryField::check() const {
  if (!mesh) throw UsageError("boundary field without mesh");
  if (values.size() != mesh->num_nodes()) throw UsageError("boundary field size does not match the mesh node count");
  if (tangential_gradient && tangential_gradient->rows() != mesh->num_nodes())
    throw UsageError("tangential gradient size does not match the mesh node count");
  if (!values.allFinite()) throw NumericalError("boundary field has non-finite values");
}

namespace {

bool used(const BoundaryField& f, int i) { return f.excluded.empty() || !f.excluded[i]; }

}  // namespace

double BoundaryField::l2_inner(const BoundaryField& o) const {
  double s = 0.0;
  for (int i = 0; i < size(); ++i)
    if (used(*this, i) && used(o, i)) s += mesh->weights[i] * values[i] * o.values[i];
  return s;
}

double BoundaryField::l2_norm() const { return std::sqrt(l2_inner(*this)); }

double BoundaryField::w12_inner(const BoundaryField& o) const {
  if (!has_gradient() || !o.has_gradient()) throw UsageError("W12 inner product needs tangential gradients");
  double s = l2_inner(o);
  for (int i = 0; i < size(); ++i)
    if (used(*this, i) && used(o, i))
      s += mesh->weights[i] * tangential_gradient->row(i).dot(o.tangential_gradient->row(i));
  return s;
}

double BoundaryField::w12_norm() const { return std::sqrt(w12_inner(*this)); }

Grad3 BoundaryField::gradient3() const {
  if (!has_gradient()) throw UsageError("field has no tangential gradient");
  return from_frame(*mesh, *tangential_gradient);
}

Grad2 to_frame(const BoundaryMesh& mesh, const Grad3& g) {
  Grad2 out(g.rows(), 2);
  for (int i = 0; i < g.rows(); ++i) out.row(i) = mesh.to_frame(i, g.row(i).transpose()).transpose();
  return out;
}

Grad3 from_frame(const BoundaryMesh& mesh, const Grad2& g) {
  Grad3 out(g.rows(), 3);
  for (int i = 0; i < g.rows(); ++i) out.row(i) = mesh.from_frame(i, g.row(i).transpose()).transpose();
  return out;
}

std::string to_string(Space s) {
  switch (s) {
    case Space::L2: return "L2";
    case Space::W12: return "W12";
    case Space::Wm12: return "W-12";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// binary dumps

namespace {

constexpr char kMagic[8] = {'D', 'B', 'I', 'E', 'M', 'A', 'T', '1'};

struct DumpHeader {
  char magic[8];
  std::int64_t rows;
  std::int64_t cols;
  std::int32_t domain_space;
  std::int32_t range_space;
  std::int32_t quadrature_order;
  std::int32_t singular_rule;  // 0 duffy, 1 kernel-split
};
static_assert(sizeof(DumpHeader) == 40);

}  // namespace

void DiscreteOperator::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  DumpHeader h{};
  std::memcpy(h.magic, kMagic, 8);
  h.rows = matrix.rows();
  h.cols = matrix.cols();
  h.domain_space = static_cast<std::int32_t>(domain_space);
  h.range_space = static_cast<std::int32_t>(range_space);
  h.quadrature_order = quadrature_order;
  h.singular_rule = singular_rule == SingularRule::duffy ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  os.write(reinterpret_cast<const char*>(matrix.data()), static_cast<std::streamsize>(sizeof(double) * matrix.size()));
  if (!os) throw Error("short write to " + path);
}

DiscreteOperator DiscreteOperator::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  DumpHeader h{};
  is.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!is || std::memcmp(h.magic, kMagic, 8) != 0) throw InputError(path + ": not a matrix dump");
  if (h.rows < 0 || h.cols < 0 || h.domain_space < 0 || h.domain_space > 2 || h.range_space < 0 || h.range_space > 2)
    throw InputError(path + ": corrupt header");
  DiscreteOperator op;
  op.matrix.resize(h.rows, h.cols);
  is.read(reinterpret_cast<char*>(op.matrix.data()), static_cast<std::streamsize>(sizeof(double) * op.matrix.size()));
  if (!is) throw InputError(path + ": truncated body");
  op.domain_space = static_cast<Space>(h.domain_space);
  op.range_space = static_cast<Space>(h.range_space);
  op.quadrature_order = h.quadrature_order;
  op.singular_rule = h.singular_rule == 0 ? SingularRule::duffy : SingularRule::kernel_split;
  return op;
}

// ---------------------------------------------------------------------------
// assembly

namespace {

void check_field(const BoundaryMesh& mesh, const BoundaryField& f) {
  f.check();
  if (f.mesh.get() != &mesh && f.mesh->num_nodes() != mesh.num_nodes())
    throw UsageError("boundary field belongs to a different mesh");
}

// One boundary row: entries for target node i against every column node.
struct RowOut {
  double* s = nullptr;
  double* t1 = nullptr;
  double* t2 = nullptr;
  double* k = nullptr;
  double* d[3] = {nullptr, nullptr, nullptr};
};

void boundary_row(const BoundaryMesh& mesh, const PanelIntegrator& P, const Mat3& A, int i, Limit limit,
                  const RowOut& out) {
  const int N = mesh.num_nodes();
  const Vec3& x = mesh.nodes[i];
  const int pi = mesh.node_panel[i];
  const Panel& own = mesh.panels[pi];
  const Vec3 An = A.transpose() * own.normal;  // <A g, n> = g . A^T n
  const bool grad = out.t1 || out.k || out.d[0];
  for (double* p : {out.s, out.t1, out.t2, out.k, out.d[0], out.d[1], out.d[2]})
    if (p) std::fill(p, p + N, 0.0);
  for (int j = 0; j < mesh.num_panels(); ++j) {
    const ColumnResult r = P.integrate_columns(x, j, j == pi, grad, limit);
    for (int c = 0; c < r.n; ++c) {
      const int col = r.col[c];
      if (out.s) out.s[col] += r.value[c];
      if (out.t1) {
        out.t1[col] += r.gradient[c].dot(own.t1);
        out.t2[col] += r.gradient[c].dot(own.t2);
      }
      if (out.k) out.k[col] += r.gradient[c].dot(An);
      if (out.d[0])
        for (int e = 0; e < 3; ++e) out.d[e][col] += r.gradient[c][e];
    }
  }
}

}  // namespace

BoundaryMatrices assemble_boundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const QuadratureOptions& quad,
                                   const AssemblyFlags& flags) {
  const int N = mesh.num_nodes();
  BoundaryMatrices M;
  if (flags.value) M.S.resize(N, N);
  if (flags.tangential) M.G.resize(2 * N, N);
  if (flags.conormal) M.K.resize(N, N);
  if (flags.gradient3)
    for (auto& d : M.D) d.resize(N, N);
  const PanelIntegrator P(mesh, coeffs, quad);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    RowOut o;
    if (flags.value) o.s = M.S.row(i).data();
    if (flags.tangential) {
      o.t1 = M.G.row(2 * i).data();
      o.t2 = M.G.row(2 * i + 1).data();
    }
    if (flags.conormal) o.k = M.K.row(i).data();
    if (flags.gradient3)
      for (int c = 0; c < 3; ++c) o.d[c] = M.D[c].row(i).data();
    boundary_row(mesh, P, coeffs.A, i, Limit::pv, o);
  }
  return M;
}

namespace {

DiscreteOperator wrap(Mat m, Space dom, Space range, const BoundaryMesh& mesh, const QuadratureOptions& quad) {
  DiscreteOperator op;
  op.matrix = std::move(m);
  op.domain_space = dom;
  op.range_space = range;
  op.quadrature_order = mesh.nodes_per_panel;
  op.singular_rule = quad.rule;
  if (!op.matrix.allFinite()) throw NumericalError("operator assembly produced non-finite entries");
  return op;
}

}  // namespace

DiscreteOperator single_layer_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                       const QuadratureOptions& quad) {
  auto M = assemble_boundary(mesh, coeffs, quad, {true, false, false, false});
  return wrap(std::move(M.S), Space::L2, Space::L2, mesh, quad);
}

DiscreteOperator single_layer_w12_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                           const QuadratureOptions& quad) {
  auto M = assemble_boundary(mesh, coeffs, quad, {true, true, false, false});
  const int N = mesh.num_nodes();
  Mat out(3 * N, N);
  out.topRows(N) = M.S;
  out.bottomRows(2 * N) = M.G;
  return wrap(std::move(out), Space::L2, Space::W12, mesh, quad);
}

DiscreteOperator conormal_pv_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                      const QuadratureOptions& quad) {
  auto M = assemble_boundary(mesh, coeffs, quad, {false, false, true, false});
  return wrap(std::move(M.K), Space::L2, Space::L2, mesh, quad);
}

DiscreteOperator adjoint_single_layer_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                               const QuadratureOptions& quad) {
  return single_layer_operator(mesh, coeffs.adjoint(), quad);
}

Mat weight_conjugated_transpose(const BoundaryMesh& mesh, const Mat& S) {
  const int N = mesh.num_nodes();
  if (S.cols() != N) throw UsageError("matrix does not act on the mesh nodes");
  const Eigen::Map<const Vec> w(mesh.weights.data(), N);
  Vec rw(S.rows());
  for (int r = 0; r < S.rows(); ++r) rw[r] = mesh.weights[r < N ? r : (r - N) / 2];
  Mat out = w.cwiseInverse().asDiagonal() * S.transpose() * rw.asDiagonal();
  return out;
}

DiscreteOperator s_star_formula_operator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                         const QuadratureOptions& quad) {
  const int N = mesh.num_nodes();
  const PanelIntegrator P(mesh, coeffs.adjoint(), quad);
  Mat out = Mat::Zero(N, 3 * N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    const Vec3& x = mesh.nodes[i];
    const int pi = mesh.node_panel[i];
    double* row = out.row(i).data();
    for (int j = 0; j < mesh.num_panels(); ++j) {
      const ColumnResult r = P.integrate_columns(x, j, j == pi, true, Limit::pv);
      for (int c = 0; c < r.n; ++c) {
        const int col = r.col[c];
        const Panel& pc = mesh.panels[mesh.node_panel[col]];
        row[col] += r.value[c];
        // grad_q Gamma^t(p, q) = -grad_p Gamma^t(p, q)
        row[N + 2 * col] -= r.gradient[c].dot(pc.t1);
        row[N + 2 * col + 1] -= r.gradient[c].dot(pc.t2);
      }
    }
  }
  return wrap(std::move(out), Space::Wm12, Space::L2, mesh, quad);
}

DiscreteOperator s_star_adjoint_operator(const BoundaryMesh& mesh, const DiscreteOperator& s_w12) {
  const int N = mesh.num_nodes();
  if (s_w12.matrix.rows() != 3 * N || s_w12.matrix.cols() != N)
    throw UsageError("expected the [S; grad_T S] operator");
  DiscreteOperator op;
  op.matrix = weight_conjugated_transpose(mesh, s_w12.matrix);
  op.domain_space = Space::Wm12;
  op.range_space = Space::L2;
  op.quadrature_order = s_w12.quadrature_order;
  op.singular_rule = s_w12.singular_rule;
  return op;
}

// ---------------------------------------------------------------------------
// matrix-free applications

BoundaryField single_layer_boundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                    const QuadratureOptions& quad) {
  check_field(mesh, f);
  const int N = mesh.num_nodes();
  const PanelIntegrator P(mesh, coeffs, quad);
  Vec out(N);
#pragma omp parallel
  {
    std::vector<double> row(N);
#pragma omp for schedule(static)
    for (int i = 0; i < N; ++i) {
      RowOut o;
      o.s = row.data();
      boundary_row(mesh, P, coeffs.A, i, Limit::pv, o);
      out[i] = Eigen::Map<const Vec>(row.data(), N).dot(f.values);
    }
  }
  return BoundaryField(f.mesh, std::move(out));
}

Grad2 tangential_gradient_S(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                            const QuadratureOptions& quad) {
  check_field(mesh, f);
  const int N = mesh.num_nodes();
  const PanelIntegrator P(mesh, coeffs, quad);
  Grad2 out(N, 2);
#pragma omp parallel
  {
    std::vector<double> r1(N), r2(N);
#pragma omp for schedule(static)
    for (int i = 0; i < N; ++i) {
      RowOut o;
      o.t1 = r1.data();
      o.t2 = r2.data();
      boundary_row(mesh, P, coeffs.A, i, Limit::pv, o);
      out(i, 0) = Eigen::Map<const Vec>(r1.data(), N).dot(f.values);
      out(i, 1) = Eigen::Map<const Vec>(r2.data(), N).dot(f.values);
    }
  }
  return out;
}

BoundaryField conormal_pv(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                          const QuadratureOptions& quad) {
  check_field(mesh, f);
  const int N = mesh.num_nodes();
  const PanelIntegrator P(mesh, coeffs, quad);
  Vec out(N);
#pragma omp parallel
  {
    std::vector<double> row(N);
#pragma omp for schedule(static)
    for (int i = 0; i < N; ++i) {
      RowOut o;
      o.k = row.data();
      boundary_row(mesh, P, coeffs.A, i, Limit::pv, o);
      out[i] = Eigen::Map<const Vec>(row.data(), N).dot(f.values);
    }
  }
  return BoundaryField(f.mesh, std::move(out));
}

BoundaryField adjoint_single_layer(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                   const QuadratureOptions& quad) {
  return single_layer_boundary(mesh, coeffs.adjoint(), f, quad);
}

bool strictly_interior(const BoundaryMesh& mesh, const Vec3& x, double margin) {
  return mesh.locator().signed_distance(x) > margin;
}

namespace {

void require_off_boundary(const BoundaryMesh& mesh, const Vec3& x) {
  const double d = std::abs(mesh.locator().signed_distance(x));
  if (!(d > 1e-12 * std::max(1.0, mesh.diameter)))
    throw UsageError("target lies on the boundary; use the boundary operator instead");
}

}  // namespace

double single_layer_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                const Vec3& x, const QuadratureOptions& quad) {
  check_field(mesh, f);
  require_off_boundary(mesh, x);
  const PotentialEvaluator ev(mesh, coeffs, quad);
  return ev.single_layer(x, Mat(f.values), nullptr)[0];
}

double adjoint_single_layer_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f,
                                        const Vec3& x, const QuadratureOptions& quad) {
  return single_layer_offboundary(mesh, coeffs.adjoint(), f, x, quad);
}

// ---------------------------------------------------------------------------
// one-sided conormal derivatives

Mat conormal_onesided(const BoundaryMesh& mesh, const Coefficients& coeffs, const Mat& F, Side side,
                      const LayerOptions& opts, std::vector<char>* flagged) {
  const int N = mesh.num_nodes();
  if (F.rows() != N) throw UsageError("density matrix does not match the mesh");
  const int m = static_cast<int>(F.cols());
  const PanelIntegrator P(mesh, coeffs, opts.quad);
  const double sgn = side == Side::interior ? -1.0 : 1.0;
  const Limit lim = side == Side::interior ? Limit::minus : Limit::plus;
  Mat out(N, m);
  std::vector<char> flag(N, 0);
  // Richardson weights for offsets d, d/2, d/4 with an error expansion c1 d + c2 d^2.
  const double rw[3] = {1.0 / 3.0, -2.0, 8.0 / 3.0};
  if (std::abs(opts.offsets[1] - 0.5 * opts.offsets[0]) > 1e-12 * opts.offsets[0] ||
      std::abs(opts.offsets[2] - 0.5 * opts.offsets[1]) > 1e-12 * opts.offsets[0])
    throw InputError("one-sided offsets must halve from one to the next");
#pragma omp parallel
  {
    std::vector<double> row(N);
#pragma omp for schedule(static)
    for (int i = 0; i < N; ++i) {
      const int pi = mesh.node_panel[i];
      const Panel& own = mesh.panels[pi];
      const Vec3 An = coeffs.A.transpose() * own.normal;
      const Vec3& p = mesh.nodes[i];
      std::fill(row.begin(), row.end(), 0.0);
      // Panels near p carry a drift-free part that varies on the scale of the panel size; it is
      // continuous at p off the own panel and is taken there directly instead of extrapolated.
      std::vector<int> near;
      for (int j = 0; j < mesh.num_panels(); ++j)
        if (j == pi || (p - mesh.panels[j].centroid).norm() < opts.quad.mid_ratio * mesh.panels[j].diameter)
          near.push_back(j);
      for (int k = 0; k < 3; ++k) {
        const double delta = opts.offsets[k] * own.diameter;
        const Vec3 x = p + sgn * delta * own.normal;
        if (k == 0) {
          const double sd = mesh.locator().signed_distance(x);
          // expected: +delta inside, -delta outside
          if (-sgn * sd < 0.25 * delta) flag[i] = 1;
        }
        for (int j = 0; j < mesh.num_panels(); ++j) {
          const ColumnResult r = P.integrate_columns(x, j, false, true);
          for (int c = 0; c < r.n; ++c) row[r.col[c]] += rw[k] * r.gradient[c].dot(An);
        }
        for (int j : near) {
          const ColumnResult s0 = P.to_columns(P.analytic_part(x, j, Limit::pv), j);
          for (int c = 0; c < s0.n; ++c) row[s0.col[c]] -= rw[k] * s0.gradient[c].dot(An);
        }
      }
      // exact one-sided limit on the own panel, plain values elsewhere
      for (int j : near) {
        const ColumnResult s0 = P.to_columns(P.analytic_part(p, j, j == pi ? lim : Limit::pv), j);
        for (int c = 0; c < s0.n; ++c) row[s0.col[c]] += s0.gradient[c].dot(An);
      }
      out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), N) * F;
    }
  }
  if (flagged) *flagged = std::move(flag);
  return out;
}

BoundaryField conormal_onesided(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& f, Side side,
                                const LayerOptions& opts) {
  check_field(mesh, f);
  std::vector<char> flagged;
  Mat r = conormal_onesided(mesh, coeffs, Mat(f.values), side, opts, &flagged);
  BoundaryField out(f.mesh, Vec(r.col(0)));
  out.excluded = std::move(flagged);
  return out;
}

// ---------------------------------------------------------------------------
// S*

BoundaryField adjoint_potential_S_star(const BoundaryMesh& mesh, const Coefficients& coeffs, const BoundaryField& H,
                                       Functional kind, const QuadratureOptions& quad) {
  check_field(mesh, H);
  if (kind == Functional::e2) return adjoint_single_layer(mesh, coeffs, H, quad);
  if (!H.has_gradient()) throw UsageError("S* of a general functional needs tangential gradient samples");
  const int N = mesh.num_nodes();
  const PanelIntegrator P(mesh, coeffs.adjoint(), quad);
  const Grad3 g = H.gradient3();
  Vec out(N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    const Vec3& x = mesh.nodes[i];
    const int pi = mesh.node_panel[i];
    double s = 0.0;
    for (int j = 0; j < mesh.num_panels(); ++j) {
      const ColumnResult r = P.integrate_columns(x, j, j == pi, true, Limit::pv);
      for (int c = 0; c < r.n; ++c) {
        const int col = r.col[c];
        s += r.value[c] * H.values[col] - r.gradient[c].dot(g.row(col).transpose());
      }
    }
    out[i] = s;
  }
  return BoundaryField(H.mesh, std::move(out));
}

double adjoint_potential_S_star_offboundary(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                            const BoundaryField& H, Functional kind, const Vec3& x,
                                            const QuadratureOptions& quad) {
  check_field(mesh, H);
  require_off_boundary(mesh, x);
  const PotentialEvaluator ev(mesh, coeffs.adjoint(), quad);
  if (kind == Functional::e2) return ev.single_layer(x, Mat(H.values), nullptr)[0];
  if (!H.has_gradient()) throw UsageError("S* of a general functional needs tangential gradient samples");
  return ev.pair_potential(x, H.values, H.gradient3(), nullptr);
}

// ---------------------------------------------------------------------------
// off-boundary evaluation

PotentialEvaluator::PotentialEvaluator(const BoundaryMesh& mesh, const Coefficients& coeffs,
                                       const QuadratureOptions& quad)
    : mesh_(&mesh), integ_(mesh, coeffs, quad) {}

Vec PotentialEvaluator::single_layer(const Vec3& x, const Mat& F, Mat* grads) const {
  const int m = static_cast<int>(F.cols());
  Vec val = Vec::Zero(m);
  if (grads) grads->setZero(m, 3);
  for (int j = 0; j < mesh_->num_panels(); ++j) {
    const ColumnResult r = integ_.integrate_columns(x, j, false, grads != nullptr);
    for (int a = 0; a < r.n; ++a) {
      const int col = r.col[a];
      for (int c = 0; c < m; ++c) {
        val[c] += r.value[a] * F(col, c);
        if (grads) grads->row(c) += F(col, c) * r.gradient[a].transpose();
      }
    }
  }
  return val;
}

void PotentialEvaluator::panel_hessian(const Vec3& x, int j, std::array<Mat3, kMaxBasis>& H) const {
  const Panel& p = mesh_->panels[j];
  const int nb = integ_.basis_count();
  const Kernel& K = integ_.kernel();
  const QuadratureOptions& o = integ_.options();
  for (auto& h : H) h.setZero();
  double L[kMaxBasis];
  auto rule_on = [&](const Vec3& a, const Vec3& b, const Vec3& c, int degree) {
    const TriangleRule& rule = triangle_rule(degree);
    const double area = 0.5 * (b - a).cross(c - a).norm();
    for (size_t k = 0; k < rule.bary.size(); ++k) {
      const auto& l = rule.bary[k];
      const Vec3 y = l[0] * a + l[1] * b + l[2] * c;
      integ_.basis(j, y, L);
      const Mat3 h = (rule.weight[k] * area) * K.hessian(x - y);
      for (int q = 0; q < nb; ++q) H[q] += L[q] * h;
    }
  };
  const double ratio = (x - p.centroid).norm() / p.diameter;
  if (ratio >= o.far_ratio) return rule_on(p.v[0], p.v[1], p.v[2], 5);
  if (ratio >= o.mid_ratio) return rule_on(p.v[0], p.v[1], p.v[2], 8);
  struct Item {
    Vec3 a, b, c;
    int depth;
  };
  std::vector<Item> stack{{p.v[0], p.v[1], p.v[2], 0}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const double diam = std::max({(it.b - it.a).norm(), (it.c - it.b).norm(), (it.a - it.c).norm()});
    const double d = closest_point_on_triangle(x, it.a, it.b, it.c).distance;
    if (it.depth >= o.adapt_max_depth + 4 || d >= 3.0 * diam) {
      if (d == 0.0) throw PoleError("hessian target lies on the panel");
      rule_on(it.a, it.b, it.c, 8);
      continue;
    }
    const Vec3 ab = 0.5 * (it.a + it.b), bc = 0.5 * (it.b + it.c), ca = 0.5 * (it.c + it.a);
    stack.push_back({ab, bc, ca, it.depth + 1});
    stack.push_back({ca, bc, it.c, it.depth + 1});
    stack.push_back({ab, it.b, bc, it.depth + 1});
    stack.push_back({it.a, ab, ca, it.depth + 1});
  }
}

double PotentialEvaluator::pair_potential(const Vec3& x, const Vec& h, const Grad3& g, Vec3* grad) const {
  const int nb = integ_.basis_count();
  double u = 0.0;
  if (grad) grad->setZero();
  std::array<Mat3, kMaxBasis> H;
  for (int j = 0; j < mesh_->num_panels(); ++j) {
    const ColumnResult r = integ_.integrate_columns(x, j, false, true);
    if (grad) panel_hessian(x, j, H);
    const PanelColumns& pc = integ_.columns(j);
    for (int a = 0; a < r.n; ++a) {
      const int col = r.col[a];
      const Vec3 gc = g.row(col).transpose();
      u += r.value[a] * h[col] - r.gradient[a].dot(gc);
      if (grad) {
        Mat3 Hc = Mat3::Zero();
        for (int b = 0; b < nb; ++b) Hc += pc.coef[a][b] * H[b];
        *grad += h[col] * r.gradient[a] - Hc * gc;
      }
    }
  }
  return u;
}

}  // namespace driftbie
