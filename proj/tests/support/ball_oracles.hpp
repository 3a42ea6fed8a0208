#pragma once

// Closed forms on the unit ball for the Laplacian.

#include <Eigen/Dense>

#include <cmath>

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

// Poisson kernel d omega^x / d sigma at q on the unit sphere.
inline double ball_poisson_kernel(const Eigen::Vector3d& x, const Eigen::Vector3d& q) {
  return (1.0 - x.squaredNorm()) / (4 * kPi * std::pow((x - q).norm(), 3));
}

// Green function of -Laplace on the unit ball (Kelvin image).
inline double ball_green(const Eigen::Vector3d& x, const Eigen::Vector3d& y) {
  const double ry = y.norm();
  if (ry < 1e-14) return 1.0 / (4 * kPi * x.norm()) - 1.0 / (4 * kPi);
  const Eigen::Vector3d ys = y / (ry * ry);
  return 1.0 / (4 * kPi * (x - y).norm()) - 1.0 / (4 * kPi * ry * (x - ys).norm());
}

// omega^{(0,0,a)}({q3 > 0}) on the unit sphere, 0 < |a| < 1.
inline double ball_upper_hemisphere_measure(double a) {
  if (std::abs(a) < 1e-12) return 0.5;
  return (1 - a * a) / (2 * a) * (1 / (1 - a) - 1 / std::sqrt(1 + a * a));
}

}  // namespace oracle
