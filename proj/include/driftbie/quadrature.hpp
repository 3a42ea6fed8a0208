#pragma once

#include <array>
#include <vector>

namespace driftbie {

// Symmetric triangle rule in barycentric coordinates; weights sum to 1.
struct TriangleRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weight;
  int degree = 0;
};

// Exact for polynomials up to the requested degree (1, 2, 5 or 8 are stored).
const TriangleRule& triangle_rule(int degree);

// Gauss-Legendre rule mapped to [0, 1], n in [1, 64].
struct LineRule {
  std::vector<double> x;
  std::vector<double> w;
};
const LineRule& gauss_legendre(int n);

}  // namespace driftbie
