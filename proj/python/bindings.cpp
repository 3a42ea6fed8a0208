#include "driftbie/config.hpp"
#include "driftbie/harmonic_measure.hpp"
#include "driftbie/run.hpp"
#include "driftbie/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace driftbie;

namespace {

// pybind11 holders cannot be shared_ptr<const T>
using PyMesh = std::shared_ptr<BoundaryMesh>;

PyMesh make_mesh(const std::string& kind, int level, double scale, int quadrature_order, int flat_subdivisions) {
  DomainSpec s;
  s.kind = parse_domain_kind(kind);
  s.refinement_level = level;
  s.scale = scale;
  s.quadrature_order = quadrature_order;
  s.flat_subdivisions = flat_subdivisions;
  return std::const_pointer_cast<BoundaryMesh>(build_mesh(s));
}

Eigen::MatrixXd rows(const std::vector<Vec3>& v) {
  Eigen::MatrixXd m(v.size(), 3);
  for (size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
  return m;
}

std::vector<Vec3> points(const Eigen::MatrixXd& m) {
  if (m.cols() != 3) throw InputError("points must have shape (n, 3)");
  std::vector<Vec3> v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m.row(i).transpose();
  return v;
}

BoundaryField sample_data(const MeshPtr& mesh, const Coefficients& k, const std::string& family,
                          const std::vector<double>& params) {
  return sample(mesh, BoundaryData({family, params}, k));
}

py::dict report_dict(const CheckReport& r) {
  py::dict d;
  d["id"] = r.id;
  d["constant"] = r.constant;
  d["ceiling"] = r.ceiling;
  d["pass"] = r.pass;
  d["skipped"] = r.skipped;
  d["constants"] = r.constants;
  d["trend"] = r.trend;
  d["notes"] = r.notes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Boundary integral solvers and harmonic measure for -div(A grad u) + b . grad u";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<PoleError>(m, "PoleError", PyExc_ArithmeticError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);

  py::class_<Coefficients>(m, "Coefficients")
      .def(py::init([](const Mat3& A, const Vec3& b) { return Coefficients::make(A, b); }), py::arg("A"),
           py::arg("b"))
      .def_static("laplace", &Coefficients::laplace)
      .def("adjoint", &Coefficients::adjoint)
      .def_readonly("A", &Coefficients::A)
      .def_readonly("b", &Coefficients::b)
      .def_readonly("kappa", &Coefficients::kappa);

  py::class_<BoundaryMesh, PyMesh>(m, "Mesh")
      .def_property_readonly("num_panels", &BoundaryMesh::num_panels)
      .def_property_readonly("num_nodes", &BoundaryMesh::num_nodes)
      .def_property_readonly("nodes", [](const BoundaryMesh& b) { return rows(b.nodes); })
      .def_property_readonly("weights", [](const BoundaryMesh& b) { return b.weights; })
      .def_property_readonly("vertices", [](const BoundaryMesh& b) { return rows(b.vertices); })
      .def_property_readonly("faces", [](const BoundaryMesh& b) { return b.faces; })
      .def_readonly("total_area", &BoundaryMesh::total_area)
      .def_readonly("diameter", &BoundaryMesh::diameter)
      .def_readonly("interior_point", &BoundaryMesh::interior_point)
      .def_property_readonly("panel_size", &BoundaryMesh::panel_size)
      .def("signed_distance", [](const BoundaryMesh& b, const Vec3& x) { return b.locator().signed_distance(x); })
      .def("write_obj", [](const BoundaryMesh& b, const std::string& path) { write_obj(b, path); });

  m.def("build_mesh", &make_mesh, py::arg("kind") = "sphere", py::arg("level") = 2, py::arg("scale") = 1.0,
        py::arg("quadrature_order") = 1, py::arg("flat_subdivisions") = 0);

  m.def("fundamental_solution", &fundamental_solution, py::arg("coeffs"), py::arg("x"), py::arg("y"));
  m.def("fundamental_solution_gradient", &fundamental_solution_gradient, py::arg("coeffs"), py::arg("x"),
        py::arg("y"));

  m.def(
      "single_layer_matrix",
      [](const PyMesh& mesh, const Coefficients& k) { return Eigen::MatrixXd(single_layer_operator(*mesh, k).matrix); },
      py::arg("mesh"), py::arg("coeffs"));
  m.def(
      "single_layer",
      [](const PyMesh& mesh, const Coefficients& k, const Vec& f) {
        return single_layer_boundary(*mesh, k, BoundaryField(mesh, f)).values;
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("density"));
  m.def(
      "sample_data",
      [](const PyMesh& mesh, const Coefficients& k, const std::string& family, const std::vector<double>& p) {
        return sample_data(mesh, k, family, p).values;
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("family"), py::arg("params") = std::vector<double>{});

  py::class_<Solution>(m, "Solution")
      .def_readonly("density", &Solution::density)
      .def_readonly("residual", &Solution::residual)
      .def_readonly("condition_estimate", &Solution::condition_estimate)
      .def("evaluate", [](const Solution& s, const Eigen::MatrixXd& x) { return evaluate(s, points(x)); })
      .def("gradient", [](const Solution& s, const Eigen::MatrixXd& x) { return rows(gradient_evaluate(s, points(x))); });

  m.def(
      "solve_regularity",
      [](const PyMesh& mesh, const Coefficients& k, const std::string& family, const std::vector<double>& p) {
        return solve_regularity(mesh, k, sample_data(mesh, k, family, p));
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("family"), py::arg("params") = std::vector<double>{});
  m.def(
      "solve_dirichlet_adjoint",
      [](const PyMesh& mesh, const Coefficients& k, const std::string& family, const std::vector<double>& p) {
        return solve_dirichlet_adjoint(mesh, k, sample_data(mesh, k.adjoint(), family, p));
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("family"), py::arg("params") = std::vector<double>{});

  m.def(
      "domain_green",
      [](const PyMesh& mesh, const Coefficients& k, const Vec3& x, const Vec3& y) { return domain_green(mesh, k, x, y); },
      py::arg("mesh"), py::arg("coeffs"), py::arg("x"), py::arg("y"));

  m.def(
      "symmetrize",
      [](const Mat3& A, const Vec3& b, const std::array<Mat3, 3>& slices) {
        const Coefficients full = Coefficients::make(A, b, slices);
        const Eigen::AlignedBox3d box(Vec3::Constant(-1), Vec3::Constant(1));
        const Symmetrized s = symmetrize_operator(full, box);
        py::dict d;
        d["b_tilde"] = s.b_tilde;
        d["coeffs"] = s.coeffs;
        d["weak_form_residual"] = s.weak_form_residual;
        return d;
      },
      py::arg("A"), py::arg("b"), py::arg("antisym_slices"));

  m.def(
      "estimate_measure",
      [](const PyMesh& mesh, const Coefficients& k, const Vec3& x0, long long n, std::uint64_t seed) {
        MeasureEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_measure(*mesh, k, x0, n, seed);
        }
        py::dict d;
        d["probabilities"] = e.probabilities;
        d["std_errors"] = e.std_errors;
        d["counts"] = e.counts;
        d["timeouts"] = e.timeouts;
        d["mean_steps"] = e.mean_steps;
        d["step"] = e.step;
        return d;
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("x0"), py::arg("paths"), py::arg("seed"));

  m.def(
      "green_kernel",
      [](const PyMesh& mesh, const Coefficients& k, const Vec3& x0) {
        const GreenKernel g = green_kernel(mesh, k, x0);
        py::dict d;
        d["k"] = g.k.values;
        d["total"] = g.total;
        d["panel_integrals"] = g.panel_integrals(false);
        return d;
      },
      py::arg("mesh"), py::arg("coeffs"), py::arg("x0"));

  m.def(
      "kernel_check",
      [](const Coefficients& k, const std::string& which) {
        for (auto c : {KernelCheck::defining_property, KernelCheck::symmetry, KernelCheck::bounds,
                       KernelCheck::perturbation})
          if (to_string(c) == which) return report_dict(kernel_checks(k, c));
        throw InputError("unknown kernel check '" + which + "'");
      },
      py::arg("coeffs"), py::arg("check"));

  m.def(
      "load_matrix",
      [](const std::string& path) {
        const DiscreteOperator op = DiscreteOperator::load(path);
        py::dict d;
        d["matrix"] = Eigen::MatrixXd(op.matrix);
        d["domain_space"] = to_string(op.domain_space);
        d["range_space"] = to_string(op.range_space);
        d["quadrature_order"] = op.quadrature_order;
        d["singular_rule"] = to_string(op.singular_rule);
        return d;
      },
      py::arg("path"));

  m.def(
      "run_config",
      [](const std::string& json_text, const std::string& out) {
        RunConfig c = parse_config(json_text);
        if (!out.empty()) c.out = out;
        RunOutcome r;
        {
          py::gil_scoped_release release;
          r = run(c);
        }
        return py::make_tuple(r.exit_code, r.message, r.files);
      },
      py::arg("config_json"), py::arg("out") = "");
}
