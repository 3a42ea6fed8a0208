#include "driftbie/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace driftbie;

namespace {

MeshPtr sphere(int level, int order = 1) {
  DomainSpec s;
  s.refinement_level = level;
  s.quadrature_order = order;
  return build_mesh(s);
}

MeshPtr cube(int level) {
  DomainSpec s;
  s.kind = DomainKind::cube;
  s.scale = 2.0;
  s.refinement_level = level;
  return build_mesh(s);
}

}  // namespace

TEST_CASE("icosphere panel counts") {
  CHECK(sphere(0)->num_panels() == 20);
  CHECK(sphere(2)->num_panels() == 320);
  CHECK(sphere(3, 3)->num_nodes() == 3 * 1280);
}

TEST_CASE("cube panel count") { CHECK(cube(1)->num_panels() == 48); }

TEST_CASE("sphere area at level 4") {
  const auto m = sphere(4);
  CHECK(std::abs(m->total_area - 4 * kPi) / (4 * kPi) < 2e-3);
  double w = 0;
  for (double x : m->weights) w += x;
  CHECK(w == doctest::Approx(m->total_area).epsilon(1e-12));
}

TEST_CASE("outward normals and closed surface") {
  for (const auto& m : {sphere(2), cube(1)}) {
    Vec3 flux = Vec3::Zero();
    for (const auto& p : m->panels) {
      CHECK(p.normal.dot(p.centroid - m->interior_point) > 0);
      flux += p.area * p.normal;
    }
    CHECK(flux.norm() < 1e-12);
  }
}

TEST_CASE("flat subdivisions keep the polyhedron") {
  DomainSpec s;
  s.refinement_level = 1;
  const auto base = build_mesh(s);
  s.flat_subdivisions = 2;
  const auto fine = build_mesh(s);
  CHECK(fine->num_panels() == 16 * base->num_panels());
  CHECK(fine->total_area == doctest::Approx(base->total_area).epsilon(1e-12));
  CHECK(fine->coarse_panel_count == base->num_panels());
}

TEST_CASE("surface ball limits") {
  const auto m = sphere(3);
  const Vec3 north(0, 0, 1);
  CHECK(static_cast<int>(surface_ball(*m, north, 2.1).size()) == m->num_panels());
  // r -> 0: only panels touching q
  const auto tiny = surface_ball(*m, north, 1e-9);
  CHECK(!tiny.empty());
  CHECK(tiny.size() <= 6);
  for (int p : tiny) {
    const auto& v = m->panels[p].v;
    bool touches = false;
    for (const auto& x : v) touches |= (x - north).norm() < 1e-9;
    CHECK(touches);
  }
}

TEST_CASE("surface ball area against the cap formula") {
  // centroid selection needs panels well below r: level 5 has diameter 0.04
  const auto m = sphere(5);
  for (const Vec3& q : {Vec3(0, 0, 1), Vec3(0.6, 0.0, 0.8), Vec3(-0.48, 0.6, -0.64)}) {
    double area = 0;
    for (int p : surface_ball(*m, q.normalized(), 0.2)) area += m->panels[p].area;
    const double cap = 2 * kPi * (1 - std::cos(0.2));
    CHECK(std::abs(area - cap) / cap < 0.05);
  }
}

TEST_CASE("corkscrew point on the sphere") {
  const auto m = sphere(4);
  const auto c = corkscrew_point(*m, Vec3(0, 0, 1), 0.5);
  CHECK(!c.clamped);
  CHECK((c.point - Vec3(0, 0, 0.75)).norm() < 1e-2);
  CHECK(m->locator().signed_distance(c.point) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("corkscrew clamps to the interior point") {
  const auto m = sphere(2);
  const auto c = corkscrew_point(*m, Vec3(0, 0, 1), 5.0);
  CHECK(c.clamped);
  CHECK(!c.warning.empty());
  CHECK((c.point - m->interior_point).norm() < 1e-12);
}

TEST_CASE("corkscrew at a cube corner") {
  const auto m = cube(2);
  const Vec3 corner(1, 1, 1);
  const auto c = corkscrew_point(*m, corner, 0.2);
  // exact distance to the faces of [-1, 1]^3
  const Vec3 p = c.point;
  const double d = std::min({1 - std::abs(p.x()), 1 - std::abs(p.y()), 1 - std::abs(p.z())});
  CHECK(d >= 0.2 / (2 * std::sqrt(3.0)) - 1e-12);
  const Vec3 dir = (corner - p).normalized();
  CHECK(dir.dot(Vec3(1, 1, 1).normalized()) > 0.999);
}

TEST_CASE("cone samples") {
  const auto m = sphere(3);
  const Vec3 q = m->nodes[17];
  const Cone full = cone_samples(*m, q, kPi / 4, 0.2, 8, 6);
  CHECK(static_cast<int>(full.sample_points.size()) + full.discarded == 48);
  const double a = cone_aperture_constant(kPi / 4);
  for (const auto& x : full.sample_points) {
    const double d = m->locator().signed_distance(x);
    CHECK(d > 0);
    CHECK((x - q).norm() <= (1 + a) * d + 1e-12);
  }
  CHECK(cone_samples(*m, q, kPi / 4, 0.0, 8, 6).sample_points.empty());
}

TEST_CASE("signed distance") {
  DomainSpec s;
  s.kind = DomainKind::cube;
  s.scale = 2.0;
  const auto m = build_mesh(s);
  CHECK(m->locator().signed_distance(Vec3(0.2, 0.1, 0.5)) == doctest::Approx(0.5));
  CHECK(m->locator().signed_distance(Vec3(1.5, 0, 0)) == doctest::Approx(-0.5));
  CHECK(m->locator().signed_distance(Vec3(2, 2, 1)) == doctest::Approx(-std::sqrt(2.0)));
}

TEST_CASE("L-prism is closed and non-convex") {
  DomainSpec s;
  s.kind = DomainKind::l_prism;
  s.refinement_level = 1;
  const auto m = build_mesh(s);
  Vec3 flux = Vec3::Zero();
  for (const auto& p : m->panels) flux += p.area * p.normal;
  CHECK(flux.norm() < 1e-12);
  CHECK(m->locator().inside(m->interior_point));
}

TEST_CASE("invalid domains are rejected") {
  DomainSpec s;
  s.scale = -1;
  CHECK_THROWS_AS(build_mesh(s), InputError);
  DomainSpec e;
  e.kind = DomainKind::explicit_mesh;
  e.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  e.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(build_mesh(e), InputError);
}
