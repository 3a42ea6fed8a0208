#pragma once

#include "driftbie/layer_potentials.hpp"

#include <string>
#include <vector>

namespace driftbie {

// Named analytic boundary data. Every family has a closed-form gradient in R^3,
// which is projected onto the panel frames for tangential gradients.
//   constant        params: c
//   coordinate      params: k (0, 1, 2)
//   harmonic        params: l, m   real solid harmonic of degree l <= 2, m in [-l, l]
//   indicator       params: nx, ny, nz, offset, width   smoothed 0.5 (1 + tanh((n.x - offset) / width))
//   exponential     params: ax, ay, az   exp(a.x)
//   quadratic       params: q00 q01 q02 q11 q12 q22   x^T Q x
//   gaussian        params: cx, cy, cz, s   exp(-|x - c|^2 / s^2)
//   fundamental     params: yx, yy, yz  Gamma(x, y) of the run coefficients (pole outside the closure)
struct DataSpec {
  std::string family = "constant";
  std::vector<double> params;
};

class BoundaryData {
 public:
  BoundaryData(DataSpec spec, const Coefficients& coeffs);
  const DataSpec& spec() const { return spec_; }
  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  std::string describe() const;

 private:
  DataSpec spec_;
  Coefficients coeffs_;
};

BoundaryField sample(const MeshPtr& mesh, const BoundaryData& data);

// Ten smooth functions used for jump and Rellich refinement studies.
std::vector<DataSpec> smooth_test_family();

// Real solid harmonic r^l Y_lm as a polynomial (unnormalized) and its gradient.
double solid_harmonic(int l, int m, const Vec3& x, Vec3* grad);

}  // namespace driftbie
