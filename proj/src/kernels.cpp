#include "driftbie/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace driftbie {

Coefficients Coefficients::make(const Mat3& A, const Vec3& b, std::optional<AffineTensor> affine) {
  if (!A.allFinite() || !b.allFinite()) throw InputError("coefficients must be finite");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
    throw InputError("coefficient matrix A must be symmetric");
  Coefficients k;
  k.A = 0.5 * (A + A.transpose());
  k.b = b;
  Eigen::SelfAdjointEigenSolver<Mat3> es(k.A);
  const Vec3 ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    std::ostringstream os;
    os << "coefficient matrix A is not positive definite (smallest eigenvalue " << ev.minCoeff() << ")";
    throw InputError(os.str());
  }
  // Ellipticity lambda|y|^2 <= <Ay,y> <= |y|^2/lambda, checked on a direction grid as well.
  k.lambda = std::min(ev.minCoeff(), 1.0 / ev.maxCoeff());
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 24; ++j) {
      const double th = kPi * (i + 0.5) / 12, ph = 2 * kPi * j / 24;
      const Vec3 y(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
      if (y.dot(k.A * y) < k.lambda * (1 - 1e-12)) throw InputError("ellipticity check failed");
    }
  k.A_sqrt = es.operatorSqrt();
  k.A_inv_sqrt = es.operatorInverseSqrt();
  k.det_inv_sqrt = 1.0 / std::sqrt(ev.prod());
  k.c = k.A_inv_sqrt * b;
  k.kappa = 0.5 * k.c.norm();
  if (affine) {
    for (int s = 0; s < 3; ++s) {
      const Mat3& C = (*affine)[s];
      if (!C.allFinite()) throw InputError("affine perturbation must be finite");
      if ((C + C.transpose()).cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, C.cwiseAbs().maxCoeff())) {
        std::ostringstream os;
        os << "affine perturbation slice " << s << " is not antisymmetric";
        throw InputError(os.str());
      }
    }
    k.antisym_affine = affine;
  }
  return k;
}

Coefficients Coefficients::adjoint() const {
  Coefficients k = *this;
  k.b = -b;
  k.c = -c;
  return k;
}

Kernel::Kernel(const Coefficients& k)
    : B_(k.A_inv_sqrt), c_(k.c), kappa_(k.kappa), D_(k.det_inv_sqrt / (4 * kPi)), drift_(k.has_drift()) {}

Mat3 Kernel::hessian(const Vec3& z) const {
  const Vec3 zt = B_ * z;
  const double r = zt.norm();
  const double v = D_ * std::exp(0.5 * c_.dot(zt) - kappa_ * r) / r;
  const Vec3 zh = zt / r;
  const Vec3 g = 0.5 * c_ - (kappa_ + 1.0 / r) * zh;
  const Mat3 P = zh * zh.transpose();
  const Mat3 Ht = v * (g * g.transpose() + P / (r * r) - (kappa_ + 1.0 / r) / r * (Mat3::Identity() - P));
  return B_ * Ht * B_;
}

void check_pole(const Vec3& x, const Vec3& y) {
  const double scale = std::max({1.0, x.norm(), y.norm()});
  if (!((x - y).norm() >= kPoleGuard * scale)) throw PoleError("kernel evaluated at its pole");
}

double fundamental_solution(const Coefficients& k, const Vec3& x, const Vec3& y) {
  check_pole(x, y);
  return Kernel(k).value(x - y);
}

Vec3 fundamental_solution_gradient(const Coefficients& k, const Vec3& x, const Vec3& y) {
  check_pole(x, y);
  return Kernel(k).gradient(x - y);
}

Vec3 fundamental_solution_gradient_y(const Coefficients& k, const Vec3& x, const Vec3& y) {
  check_pole(x, y);
  return -Kernel(k).gradient(x - y);
}

Mat3 fundamental_solution_hessian(const Coefficients& k, const Vec3& x, const Vec3& y) {
  check_pole(x, y);
  return Kernel(k).hessian(x - y);
}

double adjoint_kernel(const Coefficients& k, const Vec3& y, const Vec3& x) { return fundamental_solution(k, x, y); }

double adjoint_kernel_direct(const Coefficients& k, const Vec3& y, const Vec3& x) {
  return fundamental_solution(k.adjoint(), y, x);
}

Vec3 adjoint_kernel_gradient(const Coefficients& k, const Vec3& y, const Vec3& x) {
  return fundamental_solution_gradient(k.adjoint(), y, x);
}

double conormal_kernel(const Coefficients& k, const Vec3& x, const Vec3& q, const Vec3& nu, Operator op) {
  if (op == Operator::L) return (k.A * fundamental_solution_gradient_y(k, x, q)).dot(nu);
  return (k.A.transpose() * adjoint_kernel_gradient(k, q, x)).dot(nu);
}

}  // namespace driftbie
