#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace driftbie {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad config, non-SPD coefficients, malformed meshes.
class InputError : public Error {
 public:
  using Error::Error;
};

// x and y too close for the closed-form kernels.
class PoleError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: ill-conditioned systems, Monte Carlo timeouts.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Operation called outside its preconditions.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace driftbie
