#pragma once

// Finite-difference reference solver for  -div(A(x) grad u) + b . grad u = 0,  u = g on the boundary.
// Cartesian grid with Shortley-Weller stencils at cut cells. A(x) may be non-symmetric; the
// operator is used in the expanded form
//   -sum_i s_ii(x) d_ii u + (b_j - sum_i d_i a_ij(x)) d_j u,  s = sym(A),
// where d_i a_ij is taken by central differences of the coefficient function itself.
// Mixed second derivatives are not discretized: sym(A) must be diagonal.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace oracle {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct FdProblem {
  std::function<double(const Vec3&)> level_set;  // > 0 inside
  std::function<Mat3(const Vec3&)> A;
  Vec3 b = Vec3::Zero();
  std::function<double(const Vec3&)> g;
  Vec3 lo = Vec3::Constant(-1.0), hi = Vec3::Constant(1.0);
  int n = 64;  // points per axis
};

struct FdSolution {
  int n = 0;
  Vec3 lo = Vec3::Zero();
  double h = 0.0;
  std::vector<int> index;  // grid -> unknown, -1 outside
  Eigen::VectorXd u;
  int iterations = 0;
  double solver_error = 0.0;

  Vec3 point(int i, int j, int k) const { return lo + h * Vec3(i, j, k); }
  int unknown(int i, int j, int k) const { return index[(static_cast<size_t>(k) * n + j) * n + i]; }
};

FdSolution fd_solve(const FdProblem& p);

}  // namespace oracle
