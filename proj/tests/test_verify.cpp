#include "driftbie/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

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

Solution solve(const MeshPtr& m, const Coefficients& k, const DataSpec& d) {
  return solve_regularity(m, k, sample(m, BoundaryData(d, k)));
}

}  // namespace

TEST_CASE("ball rule integrates polynomials") {
  const BallRule r = ball_rule(Vec3(0.1, 0.2, 0.3), 0.5);
  double vol = 0, second = 0;
  for (size_t i = 0; i < r.points.size(); ++i) {
    vol += r.weights[i];
    second += r.weights[i] * (r.points[i] - Vec3(0.1, 0.2, 0.3)).squaredNorm();
  }
  CHECK(vol == doctest::Approx(4.0 / 3.0 * kPi * 0.125).epsilon(1e-12));
  CHECK(second == doctest::Approx(4.0 / 5.0 * kPi * std::pow(0.5, 5)).epsilon(1e-12));
}

TEST_CASE("maximum principle for a harmonic coordinate") {
  const auto m = sphere(3);
  const Solution sol = solve(m, Coefficients::laplace(), {"coordinate", {2}});
  const CheckReport r = interior_checks(subject_of(sol), InteriorCheck::maximum_principle);
  CHECK(r.constant <= 1e-2);
  CHECK(r.constants.at("interior_min") >= -1.01);
  CHECK(r.constants.at("interior_max") <= 1.01);
}

TEST_CASE("Harnack constant of a positive constant") {
  const CheckReport r = interior_checks(constant_subject(sphere(2), 5.0), InteriorCheck::harnack);
  CHECK(r.constant == doctest::Approx(1.0).epsilon(1e-12));
  const CheckReport bad = interior_checks(constant_subject(sphere(2), -1.0), InteriorCheck::harnack);
  CHECK(!bad.pass);
  CHECK(std::isnan(bad.constant));
  CHECK(!bad.notes.empty());
}

TEST_CASE("Caccioppoli ratio for a harmonic coordinate") {
  const auto m = sphere(3);
  const Solution sol = solve(m, Coefficients::laplace(), {"coordinate", {2}});
  InteriorOptions o;
  o.center = Vec3::Zero();
  o.radii = {0.25, 0.125, 0.0625};
  const CheckReport r = interior_checks(subject_of(sol), InteriorCheck::caccioppoli, o);
  // |grad u| = 1: the left side is the ball volume
  CHECK(r.constants.at("lhs_first") == doctest::Approx(4.0 / 3.0 * kPi * std::pow(0.25, 3)).epsilon(1e-2));
  CHECK(std::isfinite(r.constant));
  CHECK(r.constants.at("spread") < 2.0);
}

TEST_CASE("global Rellich ratio for u = x3") {
  const auto m = sphere(3);
  const Solution sol = solve(m, Coefficients::laplace(), {"coordinate", {2}});
  const CheckReport r = boundary_checks({sol}, BoundaryCheck::rellich_global);
  CHECK(r.constant == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("Rellich preconditions") {
  const auto m = sphere(2);
  SUBCASE("constant data is skipped") {
    const Solution sol = solve(m, Coefficients::laplace(), {"constant", {1.0}});
    const CheckReport r = boundary_checks({sol}, BoundaryCheck::rellich_global);
    CHECK(r.skipped);
    CHECK(!r.notes.empty());
  }
  SUBCASE("non-symmetric coefficients are a usage error") {
    AffineTensor t{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
    t[1](0, 1) = 0.05;
    t[1](1, 0) = -0.05;
    Solution sol = solve(m, Coefficients::laplace(), {"coordinate", {2}});
    sol.coeffs = Coefficients::make(Mat3::Identity(), Vec3::Zero(), t);
    CHECK_THROWS_AS(boundary_checks({sol}, BoundaryCheck::rellich_global), UsageError);
  }
}

TEST_CASE("local Rellich constants are finite") {
  const auto m = sphere(3);
  const auto k = Coefficients::make(Mat3::Identity(), Vec3(1, 0, 0));
  std::vector<Solution> sols = {solve(m, k, {"coordinate", {2}}), solve(m, k, {"harmonic", {2, 1}})};
  BoundaryCheckOptions o;
  o.centers = 4;
  const CheckReport r = boundary_checks(sols, BoundaryCheck::rellich_local, o);
  CHECK(std::isfinite(r.constant));
  CHECK(r.constants.at("pairs") > 0);
  const auto kt = k.adjoint();
  std::vector<Solution> adj = {solve(m, kt, {"coordinate", {0}})};
  const CheckReport ra = boundary_checks(adj, BoundaryCheck::rellich_local_adjoint, o);
  CHECK(std::isfinite(ra.constant));
}

TEST_CASE("u by gradient: equality for constants") {
  const auto m = sphere(2);
  const Solution sol = solve(m, Coefficients::laplace(), {"constant", {2.0}});
  const CheckReport r = boundary_checks({sol}, BoundaryCheck::u_by_gradient);
  CHECK(r.constant == 0.0);
  CHECK(r.constants.at("flat_nodes") > 0);
  CHECK(r.constants.at("nodes") == 0);
  const Solution lin = solve(m, Coefficients::laplace(), {"coordinate", {2}});
  CHECK(std::isfinite(boundary_checks({lin}, BoundaryCheck::u_by_gradient).constant));
}

TEST_CASE("jump residual on the smooth family") {
  const CheckReport r = jump_check(sphere(3), Coefficients::make(Mat3::Identity(), Vec3(1, 0, 0)), smooth_test_family());
  CHECK(r.constant <= 0.05);
}

TEST_CASE("kernel checks") {
  const auto lap = Coefficients::laplace();
  SUBCASE("defining property") {
    KernelCheckOptions o;
    o.bumps = {GaussianBump{Vec3(0.1, 0.0, -0.05), 0.4}};
    const CheckReport r = kernel_checks(lap, KernelCheck::defining_property, o);
    CHECK(r.constant <= 1e-4);
    CHECK(r.pass);
    // residual of a bump centred on the pole
    GaussianBump at_pole{Vec3::Zero(), 0.3};
    CHECK(kernel_weak_form(lap, Vec3::Zero(), at_pole) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("symmetry") {
    const auto k = Coefficients::make(Vec3(2, 1, 0.5).asDiagonal(), Vec3(1, -0.5, 0.2));
    const CheckReport r = kernel_checks(k, KernelCheck::symmetry);
    CHECK(r.constant <= 1e-12);
    CHECK(r.pass);
  }
  SUBCASE("bounds saturate for Laplace") {
    const CheckReport r = kernel_checks(lap, KernelCheck::bounds);
    CHECK(r.constants.at("value") == doctest::Approx(1 / (4 * kPi)).epsilon(1e-12));
  }
  SUBCASE("perturbation") {
    const CheckReport r = kernel_checks(lap, KernelCheck::perturbation);
    CHECK(std::isfinite(r.constant));
    CHECK(r.constant > 0);
  }
}

TEST_CASE("refinement trend and csv") {
  auto make = [](int level) {
    CheckReport r;
    r.id = "demo";
    r.constant = 1.0 / level;
    r.ceiling = 1.0;
    r.judge();
    return r;
  };
  const CheckReport t = refinement_trend(make, {2, 4});
  CHECK(t.trend == std::vector<double>{0.5, 0.25});
  CHECK(t.trend_spread() == doctest::Approx(2.0));
  std::ostringstream os;
  write_reports_csv({t}, os);
  CHECK(os.str() == "id,constant,ceiling,pass,levels\ndemo,0.25,1,1,2:0.5;4:0.25\n");
  CheckReport bad;
  bad.constant = std::nan("");
  bad.judge();
  CHECK(!bad.pass);
}
