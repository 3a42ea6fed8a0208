#include "driftbie/boundary_data.hpp"
#include "driftbie/layer_potentials.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>

using namespace driftbie;

namespace {

MeshPtr sphere(int level, int order = 1) {
  static std::map<std::pair<int, int>, MeshPtr> cache;
  auto& m = cache[{level, order}];
  if (!m) {
    DomainSpec s;
    s.refinement_level = level;
    s.quadrature_order = order;
    m = build_mesh(s);
  }
  return m;
}

BoundaryField field(const MeshPtr& m, const std::string& family, std::vector<double> params,
                    const Coefficients& k = Coefficients::laplace()) {
  return sample(m, BoundaryData({family, std::move(params)}, k));
}

double rel_l2(const BoundaryField& a, const Vec& b) {
  BoundaryField d(a.mesh, a.values - b);
  return d.l2_norm() / BoundaryField(a.mesh, b).l2_norm();
}

}  // namespace

TEST_CASE("uniform density on the sphere") {
  const auto m = sphere(3);
  const auto lap = Coefficients::laplace();
  const BoundaryField one = field(m, "constant", {1.0});
  const BoundaryField s = single_layer_boundary(*m, lap, one);
  CHECK((s.values.array() - 1.0).abs().maxCoeff() <= 1e-2);
  CHECK(single_layer_offboundary(*m, lap, one, Vec3::Zero()) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(single_layer_offboundary(*m, lap, one, Vec3(0, 0, 2)) == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(single_layer_offboundary(*m, lap, one, Vec3(1.2, -0.9, 1.2)) == doctest::Approx(1 / std::sqrt(3.69)).epsilon(2e-3));

  const BoundaryField zero(m, Vec::Zero(m->num_nodes()));
  CHECK(single_layer_boundary(*m, lap, zero).values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single layer eigenvalue for degree one") {
  const auto m = sphere(3);
  const auto lap = Coefficients::laplace();
  const BoundaryField q3 = field(m, "coordinate", {2});
  const BoundaryField s = single_layer_boundary(*m, lap, q3);
  CHECK(rel_l2(s, q3.values / 3.0) <= 0.02);

  // tangential gradient: (1/3) grad_T q3
  const Grad2 g = tangential_gradient_S(*m, lap, q3);
  const Grad2 expect = *q3.tangential_gradient / 3.0;
  double num = 0, den = 0;
  for (int i = 0; i < m->num_nodes(); ++i) {
    num += m->weights[i] * (g.row(i) - expect.row(i)).squaredNorm();
    den += m->weights[i] * expect.row(i).squaredNorm();
  }
  CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("tangential gradient of the uniform potential at level 4") {
  const auto m = sphere(4);
  const Grad2 g = tangential_gradient_S(*m, Coefficients::laplace(), field(m, "constant", {1.0}));
  CHECK(g.rowwise().norm().maxCoeff() <= 1e-2);
}

TEST_CASE("nontangential trace converges") {
  const auto lap = Coefficients::laplace();
  double prev = 1e9;
  for (int level : {3, 4}) {
    const auto m = sphere(level);
    const BoundaryField f = field(m, "exponential", {0.5, -0.3, 0.2});
    const PotentialEvaluator ev(*m, lap);
    const Vec s = single_layer_boundary(*m, lap, f).values;
    double fixed = 0, scaled = 0;
    for (int i = 0; i < m->num_nodes(); i += m->num_nodes() / 40) {
      const Vec3 q = m->nodes[i];
      const Vec3 nu = m->panels[m->node_panel[i]].normal;
      fixed = std::max(fixed, std::abs(ev.single_layer(0.99 * q.normalized(), Mat(f.values), nullptr)[0] - s[i]));
      // approach along the normal at a depth tied to the mesh
      const Vec3 x = q - 0.1 * m->panel_size() * nu;
      scaled = std::max(scaled, std::abs(ev.single_layer(x, Mat(f.values), nullptr)[0] - s[i]));
    }
    if (level == 4) CHECK(fixed <= 5e-2);
    CHECK(scaled < prev);
    prev = scaled;
  }
}

TEST_CASE("singular rules agree") {
  const auto m = sphere(3);
  const auto k = Coefficients::make(Vec3(1.5, 1.0, 0.8).asDiagonal(), Vec3(0.6, 0.0, -0.4));
  const BoundaryField f = field(m, "gaussian", {0.3, 0.2, 0.6, 0.8}, k);
  QuadratureOptions duffy;
  duffy.rule = SingularRule::duffy;
  const BoundaryField a = single_layer_boundary(*m, k, f);
  const BoundaryField b = single_layer_boundary(*m, k, f, duffy);
  CHECK(rel_l2(a, b.values) <= 1e-3);
}

TEST_CASE("one-sided conormals of the uniform density") {
  // three nodes per panel: the flat-panel bias of the conormal is O(h) and needs the finer rule here
  const auto m = sphere(3, 3);
  const auto lap = Coefficients::laplace();
  const BoundaryField one = field(m, "constant", {1.0});
  const Vec in = conormal_onesided(*m, lap, one, Side::interior).values;
  const Vec out = conormal_onesided(*m, lap, one, Side::exterior).values;
  const Vec pv = conormal_pv(*m, lap, one).values;
  const int N = m->num_nodes();
  auto rms = [&](const Vec& v) { return BoundaryField(m, v).l2_norm() / std::sqrt(m->total_area); };
  CHECK(rms(in) <= 1e-2);
  CHECK(rms(Vec(out.array() + 1.0)) <= 1e-2);
  CHECK(rms(Vec(in - out - one.values)) <= 1e-2);
  CHECK(rms(Vec(pv.array() + 0.5)) <= 1e-2);
  // average of the one-sided limits is the principal value
  CHECK(rms(Vec(0.5 * (in + out) - pv)) <= 1e-3);
  CHECK(N == 3 * m->num_panels());
}

TEST_CASE("jump relation with drift") {
  const auto m = sphere(3);
  const auto k = Coefficients::make(Mat3::Identity(), Vec3(1, 0, 0));
  for (const DataSpec& d : {DataSpec{"coordinate", {2}}, DataSpec{"exponential", {0.5, -0.3, 0.2}}}) {
    const BoundaryField f = sample(m, BoundaryData(d, k));
    const Vec jump = conormal_onesided(*m, k, f, Side::interior).values - conormal_onesided(*m, k, f, Side::exterior).values;
    CHECK(rel_l2(BoundaryField(m, jump), f.values) <= 0.05);
  }
}

TEST_CASE("adjoint single layer") {
  const auto m = sphere(2);
  const auto lap = Coefficients::laplace();
  const BoundaryField f = field(m, "harmonic", {2, 1});
  const Vec s = single_layer_boundary(*m, lap, f).values;
  const Vec st = adjoint_single_layer(*m, lap, f).values;
  CHECK((s - st).cwiseAbs().maxCoeff() <= 1e-12 * s.cwiseAbs().maxCoeff());

  // b = 0: S* of an L2 pairing is S
  const Vec sstar = adjoint_potential_S_star(*m, lap, f, Functional::e2).values;
  CHECK((sstar - s).cwiseAbs().maxCoeff() <= 1e-10);
  // general formula with a zero gradient part equals the L2 pairing formula
  BoundaryField h0(m, f.values, Grad2::Zero(m->num_nodes(), 2));
  const auto k = Coefficients::make(Mat3::Identity(), Vec3(0.8, -0.2, 0.5));
  const Vec general = adjoint_potential_S_star(*m, k, h0, Functional::riesz).values;
  const Vec special = adjoint_potential_S_star(*m, k, f, Functional::e2).values;
  CHECK((general - special).cwiseAbs().maxCoeff() <= 1e-10 * special.cwiseAbs().maxCoeff());
}

TEST_CASE("adjoint potential of a constant solves the adjoint equation") {
  const auto m = sphere(3);
  const auto k = Coefficients::make(Mat3::Identity(), Vec3(1.0, 0.5, 0.0));
  const BoundaryField one = field(m, "constant", {1.0}, k);
  const double h = 0.02;
  for (const Vec3& x : {Vec3(0, 0, 0), Vec3(0.3, -0.2, 0.1), Vec3(-0.2, 0.4, -0.3)}) {
    auto u = [&](const Vec3& p) { return adjoint_single_layer_offboundary(*m, k, one, p); };
    const double u0 = u(x);
    double lap = 0;
    Vec3 grad;
    for (int d = 0; d < 3; ++d) {
      const Vec3 e = h * Vec3::Unit(d);
      const double up = u(x + e), um = u(x - e);
      lap += (up - 2 * u0 + um) / (h * h);
      grad(d) = (up - um) / (2 * h);
    }
    CHECK(std::abs(-lap - k.b.dot(grad)) <= 1e-3);
  }
}

TEST_CASE("discrete adjointness and the weighted transpose") {
  const auto m = sphere(2);
  const auto k = Coefficients::make(Mat3::Identity(), Vec3(0.7, 0.0, 0.3));
  const DiscreteOperator M = single_layer_w12_operator(*m, k);
  const DiscreteOperator Sstar = s_star_adjoint_operator(*m, M);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  const int N = m->num_nodes();
  Vec f(N), H(3 * N);
  for (auto& v : f) v = nd(gen);
  for (auto& v : H) v = nd(gen);
  const Vec Mf = M.matrix * f;
  double lhs = 0, rhs = 0;
  for (int r = 0; r < 3 * N; ++r) lhs += m->weights[r < N ? r : (r - N) / 2] * Mf[r] * H[r];
  const Vec sH = Sstar.matrix * H;
  for (int i = 0; i < N; ++i) rhs += m->weights[i] * f[i] * sH[i];
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));

  // point-rule far entries: S^t = W^{-1} S^T W exactly
  QuadratureOptions q;
  q.reconstruct = false;
  q.far_degree = 1;
  const Mat S = single_layer_operator(*m, k, q).matrix;
  const Mat St = adjoint_single_layer_operator(*m, k, q).matrix;
  const Mat T = weight_conjugated_transpose(*m, S);
  double worst = 0;
  int pairs = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const auto& pi = m->panels[m->node_panel[i]];
      const auto& pj = m->panels[m->node_panel[j]];
      const double d = (pi.centroid - pj.centroid).norm();
      if (d < q.far_ratio * std::max(pi.diameter, pj.diameter)) continue;
      worst = std::max(worst, std::abs(St(i, j) - T(i, j)) / std::abs(St(i, j)));
      ++pairs;
    }
  CHECK(pairs > 0);
  CHECK(worst <= 1e-12);
  // everywhere else: agreement to quadrature accuracy
  CHECK((St - T).norm() <= 2e-2 * St.norm());
}

TEST_CASE("matrix dump round trip") {
  const auto m = sphere(1, 3);
  const DiscreteOperator op = single_layer_operator(*m, Coefficients::laplace());
  const std::string path = "test_layer_potentials_dump.bin";
  op.save(path);
  const DiscreteOperator back = DiscreteOperator::load(path);
  CHECK(back.matrix.rows() == op.matrix.rows());
  CHECK(back.matrix.cols() == op.matrix.cols());
  CHECK((back.matrix - op.matrix).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.quadrature_order == 3);
  CHECK(back.singular_rule == op.singular_rule);
  std::remove(path.c_str());
}
