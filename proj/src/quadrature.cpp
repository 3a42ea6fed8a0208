#include "driftbie/quadrature.hpp"

#include "driftbie/common.hpp"

#include <cmath>

namespace driftbie {

namespace {

TriangleRule make_rule(int degree) {
  TriangleRule r;
  r.degree = degree;
  auto add_orbit3 = [&](double a, double w) {
    const double b = 1.0 - 2.0 * a;
    r.bary.push_back({b, a, a});
    r.bary.push_back({a, b, a});
    r.bary.push_back({a, a, b});
    for (int i = 0; i < 3; ++i) r.weight.push_back(w);
  };
  auto add_orbit6 = [&](double a, double b, double w) {
    const double c = 1.0 - a - b;
    const double p[6][3] = {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
    for (auto& q : p) {
      r.bary.push_back({q[0], q[1], q[2]});
      r.weight.push_back(w);
    }
  };
  switch (degree) {
    case 1:
      r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weight.push_back(1.0);
      break;
    case 2:
      add_orbit3(1.0 / 6, 1.0 / 3);
      break;
    case 5:
      r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weight.push_back(0.225);
      add_orbit3(0.470142064105115, 0.132394152788506);
      add_orbit3(0.101286507323456, 0.125939180544827);
      break;
    case 8:
      // Dunavant, 16 points.
      r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weight.push_back(0.144315607677787);
      add_orbit3(0.459292588292723, 0.095091634267285);
      add_orbit3(0.170569307751760, 0.103217370534718);
      add_orbit3(0.050547228317031, 0.032458497623198);
      add_orbit6(0.008394777409958, 0.263112829634638, 0.027230314174435);
      break;
    default:
      throw UsageError("triangle_rule: unsupported degree " + std::to_string(degree));
  }
  return r;
}

LineRule make_gauss(int n) {
  LineRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[n - 1 - i] = 0.5 * (1.0 + z);
    r.w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
  static const TriangleRule r1 = make_rule(1);
  static const TriangleRule r2 = make_rule(2);
  static const TriangleRule r5 = make_rule(5);
  static const TriangleRule r8 = make_rule(8);
  if (degree <= 1) return r1;
  if (degree == 2) return r2;
  if (degree <= 5) return r5;
  if (degree <= 8) return r8;
  throw UsageError("triangle_rule: degree above 8 not stored");
}

const LineRule& gauss_legendre(int n) {
  static const std::vector<LineRule> table = [] {
    std::vector<LineRule> t(65);
    for (int k = 1; k <= 64; ++k) t[k] = make_gauss(k);
    return t;
  }();
  if (n < 1 || n > 64) throw UsageError("gauss_legendre: n out of range");
  return table[n];
}

}  // namespace driftbie
