#pragma once

#include "driftbie/common.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace driftbie {

// Affine perturbation A_full(x) = A + sum_k x_k C[k] with antisymmetric slices C[k].
using AffineTensor = std::array<Mat3, 3>;

struct Coefficients {
  Mat3 A = Mat3::Identity();
  Vec3 b = Vec3::Zero();
  std::optional<AffineTensor> antisym_affine;

  // derived
  double lambda = 1.0;
  Mat3 A_sqrt = Mat3::Identity();
  Mat3 A_inv_sqrt = Mat3::Identity();
  double det_inv_sqrt = 1.0;
  Vec3 c = Vec3::Zero();
  double kappa = 0.0;

  // Validates symmetry, positive definiteness and antisymmetry of the affine slices.
  static Coefficients make(const Mat3& A, const Vec3& b, std::optional<AffineTensor> affine = std::nullopt);
  static Coefficients laplace() { return make(Mat3::Identity(), Vec3::Zero()); }

  // Coefficients of L^t = -div(A grad) - b.grad (constant b).
  Coefficients adjoint() const;
  bool has_drift() const { return b.squaredNorm() > 0.0; }
};

enum class Operator { L, Lt };

// Inner-loop evaluator of the closed-form kernel as a function of z = x - y.
class Kernel {
 public:
  explicit Kernel(const Coefficients& k);

  const Mat3& B() const { return B_; }  // A^{-1/2}
  double prefactor() const { return D_; }  // det(A)^{-1/2} / (4 pi)
  bool has_drift() const { return drift_; }

  double value(const Vec3& z) const {
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    return D_ * std::exp(0.5 * c_.dot(zt) - kappa_ * r) / r;
  }
  // gradient in x
  Vec3 gradient(const Vec3& z) const {
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    const double g = D_ * std::exp(0.5 * c_.dot(zt) - kappa_ * r) / r;
    return B_ * (g * (0.5 * c_ - (kappa_ + 1.0 / r) / r * zt));
  }
  void value_gradient(const Vec3& z, double& v, Vec3& grad) const {
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    v = D_ * std::exp(0.5 * c_.dot(zt) - kappa_ * r) / r;
    grad = B_ * (v * (0.5 * c_ - (kappa_ + 1.0 / r) / r * zt));
  }
  Mat3 hessian(const Vec3& z) const;

  // Drift-free part D / |B z| and the bounded-order remainder.
  double value0(const Vec3& z) const { return D_ / (B_ * z).norm(); }
  Vec3 gradient0(const Vec3& z) const {
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    return B_ * (-D_ / (r * r * r) * zt);
  }
  double remainder(const Vec3& z) const {
    if (!drift_) return 0.0;
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    return D_ * std::expm1(0.5 * c_.dot(zt) - kappa_ * r) / r;
  }
  Vec3 remainder_gradient(const Vec3& z) const {
    if (!drift_) return Vec3::Zero();
    const Vec3 zt = B_ * z;
    const double r = zt.norm();
    const double s = 0.5 * c_.dot(zt) - kappa_ * r;
    const Vec3 zh = zt / r;
    return B_ * (D_ / r * (std::exp(s) * (0.5 * c_ - kappa_ * zh) - std::expm1(s) / r * zh));
  }

 private:
  Mat3 B_;
  Vec3 c_;
  double kappa_;
  double D_;
  bool drift_;
};

// Separations below this multiple of max(1, |x|, |y|) are treated as the pole.
constexpr double kPoleGuard = 1e-14;
void check_pole(const Vec3& x, const Vec3& y);

double fundamental_solution(const Coefficients& k, const Vec3& x, const Vec3& y);
Vec3 fundamental_solution_gradient(const Coefficients& k, const Vec3& x, const Vec3& y);
Vec3 fundamental_solution_gradient_y(const Coefficients& k, const Vec3& x, const Vec3& y);
Mat3 fundamental_solution_hessian(const Coefficients& k, const Vec3& x, const Vec3& y);

// Gamma^t(y, x) := Gamma(x, y).
double adjoint_kernel(const Coefficients& k, const Vec3& y, const Vec3& x);
// Same value through the fundamental solution of L^t (b -> -b).
double adjoint_kernel_direct(const Coefficients& k, const Vec3& y, const Vec3& x);
// gradient of Gamma^t(y, x) in y
Vec3 adjoint_kernel_gradient(const Coefficients& k, const Vec3& y, const Vec3& x);

// Operator::L  : <A grad_q Gamma(x, q), nu>, gradient in the second slot.
// Operator::Lt : <A^T grad_q Gamma^t(q, x), nu>, through the b -> -b kernel.
double conormal_kernel(const Coefficients& k, const Vec3& x, const Vec3& q, const Vec3& nu, Operator op);

}  // namespace driftbie
