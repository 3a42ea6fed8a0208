#include "driftbie/bie_solver.hpp"

#include "support/ball_oracles.hpp"
#include "support/fd_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace driftbie;

namespace {

MeshPtr sphere(int level) {
  static std::map<int, MeshPtr> cache;
  auto& m = cache[level];
  if (!m) {
    DomainSpec s;
    s.refinement_level = level;
    m = build_mesh(s);
  }
  return m;
}

BoundaryField field(const MeshPtr& m, const Coefficients& k, const std::string& family, std::vector<double> params) {
  return sample(m, BoundaryData({family, std::move(params)}, k));
}

}  // namespace

TEST_CASE("finite-difference oracle reproduces exact solutions") {
  oracle::FdProblem p;
  p.level_set = [](const Vec3& x) { return 1.0 - x.norm(); };
  p.A = [](const Vec3&) { return Mat3::Identity(); };
  p.n = 32;
  SUBCASE("harmonic quadratic, exact for the stencil") {
    p.g = [](const Vec3& x) { return x.x() * x.x() - x.z() * x.z() + x.y(); };
    const auto s = oracle::fd_solve(p);
    double worst = 0;
    for (int k = 0; k < p.n; ++k)
      for (int j = 0; j < p.n; ++j)
        for (int i = 0; i < p.n; ++i)
          if (s.unknown(i, j, k) >= 0) worst = std::max(worst, std::abs(s.u[s.unknown(i, j, k)] - p.g(s.point(i, j, k))));
    CHECK(worst < 1e-8);
  }
  SUBCASE("drift: exp(x1) solves -Laplace u + d1 u = 0") {
    p.b = Vec3(1, 0, 0);
    p.g = [](const Vec3& x) { return std::exp(x.x()); };
    double prev = 1e9;
    for (int n : {17, 33}) {
      p.n = n;
      const auto s = oracle::fd_solve(p);
      double worst = 0;
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i)
            if (s.unknown(i, j, k) >= 0)
              worst = std::max(worst, std::abs(s.u[s.unknown(i, j, k)] - p.g(s.point(i, j, k))));
      CHECK(worst < 1e-2);
      CHECK(worst < 0.4 * prev);  // second order: ~ 1/4 per halving
      prev = worst;
    }
  }
  SUBCASE("antisymmetric coefficients act as a drift") {
    // A = I + x2 C with C12 = -C21 = 0.05 is -Laplace u + 0.05 d1 u
    p.A = [](const Vec3& x) {
      Mat3 a = Mat3::Identity();
      a(0, 1) += 0.05 * x.y();
      a(1, 0) -= 0.05 * x.y();
      return a;
    };
    p.g = [](const Vec3& x) { return std::exp(0.05 * x.x()); };
    const auto s = oracle::fd_solve(p);
    double worst = 0;
    for (int k = 0; k < p.n; ++k)
      for (int j = 0; j < p.n; ++j)
        for (int i = 0; i < p.n; ++i)
          if (s.unknown(i, j, k) >= 0) worst = std::max(worst, std::abs(s.u[s.unknown(i, j, k)] - p.g(s.point(i, j, k))));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("regularity solve reproduces harmonic polynomials") {
  const auto m = sphere(3);
  const auto lap = Coefficients::laplace();
  const Solution sol = solve_regularity(m, lap, field(m, lap, "coordinate", {2}));
  CHECK(sol.residual < 0.05);
  CHECK(sol.condition_estimate < 1e12);
  const Vec u = evaluate(sol, {Vec3(0, 0, 0.5), Vec3(0.3, -0.2, -0.4)});
  CHECK(u[0] == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(u[1] == doctest::Approx(-0.4).epsilon(1e-2));
  const auto g = gradient_evaluate(sol, {Vec3(0.1, 0.2, 0.1)});
  CHECK((g[0] - Vec3(0, 0, 1)).norm() < 2e-2);
}

TEST_CASE("constants solve L u = 0") {
  const auto m = sphere(3);
  const auto k = Coefficients::make(Vec3(1.5, 1, 0.7).asDiagonal(), Vec3(0.5, -1, 0.3));
  const Solution sol = solve_regularity(m, k, field(m, k, "constant", {2.5}));
  const Vec u = evaluate(sol, {Vec3::Zero(), Vec3(0.4, 0.3, -0.2), Vec3(-0.6, 0, 0.1)});
  for (double v : u) CHECK(v == doctest::Approx(2.5).epsilon(1e-2));
}

TEST_CASE("adjoint Dirichlet solve") {
  const auto m = sphere(3);
  SUBCASE("mean value property") {
    const auto lap = Coefficients::laplace();
    const Solution sol = solve_dirichlet_adjoint(m, lap, field(m, lap, "coordinate", {2}));
    CHECK(std::abs(evaluate(sol, {Vec3::Zero()})[0]) <= 1e-2);
    CHECK(evaluate(sol, {Vec3(0, 0, 0.5)})[0] == doctest::Approx(0.5).epsilon(2e-2));
  }
  SUBCASE("constants with constant drift") {
    const auto k = Coefficients::make(Mat3::Identity(), Vec3(1, 0.5, 0));
    const Solution sol = solve_dirichlet_adjoint(m, k, field(m, k.adjoint(), "constant", {1.0}));
    const Vec u = evaluate(sol, {Vec3::Zero(), Vec3(0.3, 0.3, 0.3), Vec3(-0.5, 0.1, 0)});
    for (double v : u) CHECK(v == doctest::Approx(1.0).epsilon(1e-2));
  }
  SUBCASE("exact adjoint solution") {
    // L^t = -Laplace - d1: u = exp(-x1)
    const auto k = Coefficients::make(Mat3::Identity(), Vec3(1, 0, 0));
    const Solution sol = solve_dirichlet_adjoint(m, k, field(m, k.adjoint(), "exponential", {-1, 0, 0}));
    const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(0.5, 0, 0), Vec3(-0.4, 0.3, 0.2)};
    const Vec u = evaluate(sol, pts);
    for (size_t i = 0; i < pts.size(); ++i) CHECK(u[i] == doctest::Approx(std::exp(-pts[i].x())).epsilon(1e-2));
  }
}

TEST_CASE("domain Green function of the ball") {
  const auto m = sphere(3);
  const auto lap = Coefficients::laplace();
  auto sys = std::make_shared<const SingleLayerSystem>(m, lap);
  const DomainGreen G(sys);
  CHECK(G(Vec3(0, 0, 0.5), Vec3::Zero()) == doctest::Approx(1 / (4 * kPi)).epsilon(2e-2));
  for (const auto& [x, y] : std::vector<std::pair<Vec3, Vec3>>{{Vec3(0.3, 0.1, -0.2), Vec3(-0.2, 0.4, 0.1)},
                                                               {Vec3(0.0, 0.5, 0.1), Vec3(0.1, -0.3, -0.4)}}) {
    CHECK(G(x, y) == doctest::Approx(oracle::ball_green(x, y)).epsilon(2e-2));
    CHECK(G(x, y) == doctest::Approx(G(y, x)).epsilon(2e-2));
  }
  CHECK_THROWS_AS(G(Vec3(0.1, 0, 0), Vec3(0.1, 0, 0)), PoleError);
}

TEST_CASE("symmetrization") {
  const Eigen::AlignedBox3d box(Vec3::Constant(-1), Vec3::Constant(1));
  const auto plain = Coefficients::make(Vec3(2, 1, 1).asDiagonal(), Vec3(1, 0, 0));
  const Symmetrized s0 = symmetrize_operator(plain, box);
  CHECK(s0.b_tilde.norm() == 0.0);

  AffineTensor t{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
  t[1](0, 1) = 0.05;
  t[1](1, 0) = -0.05;
  const auto full = Coefficients::make(Mat3::Identity(), Vec3::Zero(), t);
  const Symmetrized s = symmetrize_operator(full, box);
  CHECK(s.b_tilde == Vec3(0.05, 0, 0));
  CHECK(s.weak_form_residual <= 1e-8);
  CHECK(s.coeffs.b == Vec3(0.05, 0, 0));

  // u = x1 x2 against a Gaussian bump that vanishes on the box boundary to machine precision
  auto u = [](const Vec3& x, Vec3* g) {
    if (g) *g = Vec3(x.y(), x.x(), 0);
    return x.x() * x.y();
  };
  auto phi = [](const Vec3& x, Vec3* g) {
    const Vec3 c(0.1, -0.1, 0.05);
    const double v = std::exp(-(x - c).squaredNorm() / 0.04);
    if (g) *g = -2 * (x - c) / 0.04 * v;
    return v;
  };
  CHECK(weak_form_residual(full, s.coeffs, box, u, phi) <= 1e-8);
}

TEST_CASE("nontangential maximal functions") {
  const auto m = sphere(3);
  const auto lap = Coefficients::laplace();
  // three dyadic radii keep samples a quarter panel or more from the vertex
  ConeParams cone;
  cone.n_radii = 3;
  SUBCASE("constant") {
    const Solution sol = solve_regularity(m, lap, field(m, lap, "constant", {-3.0}));
    const BoundaryField us = nontangential_maximal(sol, MaximalOf::u, cone);
    for (int i = 0; i < us.size(); ++i)
      if (us.excluded.empty() || !us.excluded[i]) CHECK(us.values[i] == doctest::Approx(3.0).epsilon(1e-2));
  }
  SUBCASE("unit gradient and refined cones") {
    const Solution sol = solve_regularity(m, lap, field(m, lap, "coordinate", {2}));
    const BoundaryField gs = nontangential_maximal(sol, MaximalOf::grad_u, cone);
    int used = 0;
    for (int i = 0; i < gs.size(); ++i)
      if (gs.excluded.empty() || !gs.excluded[i]) {
        CHECK(gs.values[i] == doctest::Approx(1.0).epsilon(1e-2));
        ++used;
      }
    CHECK(used > 0);
    const BoundaryField coarse = nontangential_maximal(sol, MaximalOf::u, cone);
    ConeParams dense = cone;
    dense.n_rays = 32;
    const BoundaryField fine = nontangential_maximal(sol, MaximalOf::u, dense);
    double num = 0, den = 0;
    for (int i = 0; i < fine.size(); ++i) {
      if ((!coarse.excluded.empty() && coarse.excluded[i]) || (!fine.excluded.empty() && fine.excluded[i])) continue;
      num += m->weights[i] * std::pow(coarse.values[i] - fine.values[i], 2);
      den += m->weights[i] * fine.values[i] * fine.values[i];
    }
    CHECK(std::sqrt(num / den) <= 0.05);
  }
}
