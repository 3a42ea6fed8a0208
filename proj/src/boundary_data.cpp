#include "driftbie/boundary_data.hpp"

#include <sstream>

namespace driftbie {

double solid_harmonic(int l, int m, const Vec3& x, Vec3* grad) {
  const double X = x[0], Y = x[1], Z = x[2];
  Vec3 g = Vec3::Zero();
  double v = 0.0;
  if (l == 0 && m == 0) {
    v = 1.0;
  } else if (l == 1 && m >= -1 && m <= 1) {
    const int k = m == -1 ? 1 : (m == 0 ? 2 : 0);  // y, z, x
    v = x[k];
    g[k] = 1.0;
  } else if (l == 2) {
    switch (m) {
      case -2: v = X * Y; g = Vec3(Y, X, 0); break;
      case -1: v = Y * Z; g = Vec3(0, Z, Y); break;
      case 0: v = 2 * Z * Z - X * X - Y * Y; g = Vec3(-2 * X, -2 * Y, 4 * Z); break;
      case 1: v = X * Z; g = Vec3(Z, 0, X); break;
      case 2: v = X * X - Y * Y; g = Vec3(2 * X, -2 * Y, 0); break;
      default: throw InputError("harmonic order m out of range");
    }
  } else {
    throw InputError("harmonic data supports degree l <= 2 with |m| <= l");
  }
  if (grad) *grad = g;
  return v;
}

namespace {

size_t expected_params(const std::string& f) {
  if (f == "constant" || f == "coordinate") return 1;
  if (f == "harmonic") return 2;
  if (f == "indicator") return 5;
  if (f == "exponential" || f == "fundamental") return 3;
  if (f == "quadratic") return 6;
  if (f == "gaussian") return 4;
  throw InputError("unknown boundary-data family '" + f + "'");
}

}  // namespace

BoundaryData::BoundaryData(DataSpec spec, const Coefficients& coeffs) : spec_(std::move(spec)), coeffs_(coeffs) {
  const size_t n = expected_params(spec_.family);
  if (spec_.params.size() != n)
    throw InputError("boundary-data family '" + spec_.family + "' takes " + std::to_string(n) + " parameters");
  for (double p : spec_.params)
    if (!std::isfinite(p)) throw InputError("boundary-data parameters must be finite");
  const auto& p = spec_.params;
  if (spec_.family == "coordinate" && (p[0] != 0 && p[0] != 1 && p[0] != 2))
    throw InputError("coordinate index must be 0, 1 or 2");
  if (spec_.family == "harmonic") solid_harmonic(static_cast<int>(p[0]), static_cast<int>(p[1]), Vec3::Zero(), nullptr);
  if (spec_.family == "indicator" && !(p[4] > 0)) throw InputError("indicator width must be positive");
  if (spec_.family == "gaussian" && !(p[3] > 0)) throw InputError("gaussian width must be positive");
}

double BoundaryData::value(const Vec3& x) const {
  const auto& p = spec_.params;
  const std::string& f = spec_.family;
  if (f == "constant") return p[0];
  if (f == "coordinate") return x[static_cast<int>(p[0])];
  if (f == "harmonic") return solid_harmonic(static_cast<int>(p[0]), static_cast<int>(p[1]), x, nullptr);
  if (f == "indicator") {
    const Vec3 n = Vec3(p[0], p[1], p[2]).normalized();
    return 0.5 * (1.0 + std::tanh((n.dot(x) - p[3]) / p[4]));
  }
  if (f == "exponential") return std::exp(Vec3(p[0], p[1], p[2]).dot(x));
  if (f == "quadratic") {
    Mat3 Q;
    Q << p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5];
    return x.dot(Q * x);
  }
  if (f == "gaussian") return std::exp(-(x - Vec3(p[0], p[1], p[2])).squaredNorm() / (p[3] * p[3]));
  return fundamental_solution(coeffs_, x, Vec3(p[0], p[1], p[2]));
}

Vec3 BoundaryData::gradient(const Vec3& x) const {
  const auto& p = spec_.params;
  const std::string& f = spec_.family;
  if (f == "constant") return Vec3::Zero();
  if (f == "coordinate") return Vec3::Unit(static_cast<int>(p[0]));
  if (f == "harmonic") {
    Vec3 g;
    solid_harmonic(static_cast<int>(p[0]), static_cast<int>(p[1]), x, &g);
    return g;
  }
  if (f == "indicator") {
    const Vec3 n = Vec3(p[0], p[1], p[2]).normalized();
    const double t = std::tanh((n.dot(x) - p[3]) / p[4]);
    return 0.5 * (1 - t * t) / p[4] * n;
  }
  if (f == "exponential") {
    const Vec3 a(p[0], p[1], p[2]);
    return std::exp(a.dot(x)) * a;
  }
  if (f == "quadratic") {
    Mat3 Q;
    Q << p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5];
    return 2.0 * Q * x;
  }
  if (f == "gaussian") {
    const Vec3 c(p[0], p[1], p[2]);
    return -2.0 / (p[3] * p[3]) * std::exp(-(x - c).squaredNorm() / (p[3] * p[3])) * (x - c);
  }
  return fundamental_solution_gradient(coeffs_, x, Vec3(p[0], p[1], p[2]));
}

std::string BoundaryData::describe() const {
  std::ostringstream os;
  os << spec_.family << "(";
  for (size_t i = 0; i < spec_.params.size(); ++i) os << (i ? "," : "") << spec_.params[i];
  os << ")";
  return os.str();
}

BoundaryField sample(const MeshPtr& mesh, const BoundaryData& data) {
  const int N = mesh->num_nodes();
  Vec v(N);
  Grad2 g(N, 2);
  for (int i = 0; i < N; ++i) {
    const Vec3& x = mesh->nodes[i];
    v[i] = data.value(x);
    g.row(i) = mesh->to_frame(i, data.gradient(x)).transpose();
  }
  return BoundaryField(mesh, std::move(v), std::move(g));
}

std::vector<DataSpec> smooth_test_family() {
  return {
      {"coordinate", {2}},
      {"coordinate", {0}},
      {"harmonic", {2, -2}},
      {"harmonic", {2, 0}},
      {"harmonic", {2, 1}},
      {"exponential", {0.5, -0.3, 0.2}},
      {"quadratic", {1.0, 0.2, -0.1, 0.5, 0.3, -0.4}},
      {"gaussian", {0.3, 0.2, 0.6, 0.8}},
      {"indicator", {0.2, 0.3, 1.0, 0.1, 0.5}},
      {"exponential", {-0.4, 0.6, 0.1}},
  };
}

}  // namespace driftbie
