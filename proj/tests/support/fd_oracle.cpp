#include "fd_oracle.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

// Fraction of the step from x to y at which the level set changes sign (x inside, y outside).
double crossing(const FdProblem& p, const Vec3& x, const Vec3& y) {
  double a = 0.0, b = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double m = 0.5 * (a + b);
    if (p.level_set(x + m * (y - x)) > 0.0)
      a = m;
    else
      b = m;
  }
  return std::max(0.5 * (a + b), 1e-8);
}

}  // namespace

FdSolution fd_solve(const FdProblem& p) {
  FdSolution s;
  const int n = p.n;
  s.n = n;
  s.lo = p.lo;
  s.h = (p.hi - p.lo).maxCoeff() / (n - 1);
  const double h = s.h;
  s.index.assign(static_cast<size_t>(n) * n * n, -1);
  int count = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (p.level_set(s.point(i, j, k)) > 0.0) s.index[(static_cast<size_t>(k) * n + j) * n + i] = count++;
  if (count == 0) throw std::runtime_error("fd_solve: empty domain");

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(count) * 7);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(count);
  const double hc = 1e-5;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int row = s.unknown(i, j, k);
        if (row < 0) continue;
        const Vec3 x = s.point(i, j, k);
        const Mat3 a = p.A(x);
        const Mat3 sym = 0.5 * (a + a.transpose());
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            if (r != c && std::abs(sym(r, c)) > 1e-14)
              throw std::runtime_error("fd_solve: symmetric part of A must be diagonal");
        // divergence of the coefficient rows, d_i a_ij
        Vec3 drift = p.b;
        for (int d = 0; d < 3; ++d) {
          const Vec3 e = Vec3::Unit(d) * hc;
          const Mat3 da = (p.A(x + e) - p.A(x - e)) / (2 * hc);
          drift -= da.row(d).transpose();
        }
        double diag = 0.0;
        const int ijk[3] = {i, j, k};
        for (int d = 0; d < 3; ++d) {
          // neighbour distances and values (unknown index or boundary value)
          double hs[2];
          int col[2];
          double val[2];
          for (int side = 0; side < 2; ++side) {
            int q[3] = {ijk[0], ijk[1], ijk[2]};
            q[d] += side == 0 ? 1 : -1;
            const bool in_grid = q[d] >= 0 && q[d] < n;
            const int c = in_grid ? s.unknown(q[0], q[1], q[2]) : -1;
            if (c >= 0) {
              hs[side] = h;
              col[side] = c;
              val[side] = 0.0;
            } else {
              const Vec3 y = x + Vec3::Unit(d) * (side == 0 ? h : -h);
              const double t = crossing(p, x, y);
              hs[side] = t * h;
              col[side] = -1;
              val[side] = p.g(x + t * (y - x));
            }
          }
          const double hp = hs[0], hm = hs[1];
          // -s_dd u'' on the non-uniform 3-point stencil
          const double c2 = 2.0 / (hp + hm);
          double wp = -sym(d, d) * c2 / hp, wm = -sym(d, d) * c2 / hm, w0 = sym(d, d) * c2 * (1 / hp + 1 / hm);
          // drift_d u' on the same stencil
          const double den = hp * hm * (hp + hm);
          wp += drift(d) * hm * hm / den;
          wm -= drift(d) * hp * hp / den;
          w0 -= drift(d) * (hm * hm - hp * hp) / den;
          diag += w0;
          const double w[2] = {wp, wm};
          for (int side = 0; side < 2; ++side) {
            if (col[side] >= 0)
              trip.emplace_back(row, col[side], w[side]);
            else
              rhs(row) -= w[side] * val[side];
          }
        }
        trip.emplace_back(row, row, diag);
      }
  Eigen::SparseMatrix<double, Eigen::RowMajor> M(count, count);
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::IncompleteLUT<double>> solver;
  solver.preconditioner().setDroptol(1e-6);
  solver.preconditioner().setFillfactor(20);
  solver.setTolerance(1e-11);
  solver.setMaxIterations(2000);
  solver.compute(M);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fd_solve: preconditioner failed");
  s.u = solver.solve(rhs);
  s.iterations = static_cast<int>(solver.iterations());
  s.solver_error = solver.error();
  if (solver.info() != Eigen::Success) throw std::runtime_error("fd_solve: BiCGSTAB did not converge");
  return s;
}

}  // namespace oracle
