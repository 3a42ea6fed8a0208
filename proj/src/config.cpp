#include "driftbie/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace driftbie {

using nlohmann::json;

std::string to_string(Command c) {
  switch (c) {
    case Command::solve_regularity: return "solve-regularity";
    case Command::solve_dirichlet_adjoint: return "solve-dirichlet-adjoint";
    case Command::harmonic_measure: return "harmonic-measure";
    case Command::verify: return "verify";
    case Command::convergence_study: return "convergence-study";
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::solve_regularity, Command::solve_dirichlet_adjoint, Command::harmonic_measure,
                    Command::verify, Command::convergence_study})
    if (to_string(c) == name) return c;
  throw InputError("unknown command '" + name + "'");
}

namespace {

void only_keys(const json& j, const std::string& block, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InputError("'" + block + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw InputError("unknown key '" + k + "' in " + block);
}

std::vector<double> reals(const json& j, const std::string& what, size_t n) {
  if (!j.is_array() || j.size() != n) throw InputError(what + " needs " + std::to_string(n) + " numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw InputError(what + " needs numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

Vec3 vec3(const json& j, const std::string& what) {
  const auto v = reals(j, what, 3);
  return {v[0], v[1], v[2]};
}

Mat3 mat3(const json& j, const std::string& what) {
  const auto v = reals(j, what, 9);
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = v[i];
  return m;
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& block) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("bad value for " + block + "." + key);
  }
}

void parse_domain(const json& j, RunConfig& c) {
  only_keys(j, "domain", {"kind", "scale", "level", "flat_subdivisions", "quadrature_order", "interior_point",
                          "vertices", "faces"});
  DomainSpec& d = c.domain;
  d.kind = parse_domain_kind(get<std::string>(j, "kind", "sphere", "domain"));
  d.scale = get<double>(j, "scale", 1.0, "domain");
  d.refinement_level = get<int>(j, "level", 0, "domain");
  d.flat_subdivisions = get<int>(j, "flat_subdivisions", 0, "domain");
  d.quadrature_order = get<int>(j, "quadrature_order", 1, "domain");
  if (!(d.scale > 0)) throw InputError("domain.scale must be positive");
  if (d.refinement_level < 0 || d.refinement_level > d.max_level) throw InputError("domain.level out of range");
  if (d.flat_subdivisions < 0 || d.flat_subdivisions > 3) throw InputError("domain.flat_subdivisions out of range");
  if (d.quadrature_order != 1 && d.quadrature_order != 3) throw InputError("domain.quadrature_order must be 1 or 3");
  if (j.contains("interior_point")) d.interior_point = vec3(j["interior_point"], "domain.interior_point");
  if (j.contains("vertices")) {
    for (const auto& v : j["vertices"]) d.vertices.push_back(vec3(v, "domain.vertices entry"));
    for (const auto& f : j.value("faces", json::array())) {
      const auto r = reals(f, "domain.faces entry", 3);
      d.faces.push_back({static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2])});
    }
  }
}

void parse_coeffs(const json& j, RunConfig& c) {
  only_keys(j, "coeffs", {"A", "b", "antisym_affine"});
  const Mat3 A = j.contains("A") ? mat3(j["A"], "coeffs.A") : Mat3::Identity();
  const Vec3 b = j.contains("b") ? vec3(j["b"], "coeffs.b") : Vec3::Zero();
  std::optional<AffineTensor> aff;
  if (j.contains("antisym_affine")) {
    // 27 numbers: slice k (coefficient of x_k), row-major
    const auto v = reals(j["antisym_affine"], "coeffs.antisym_affine", 27);
    AffineTensor t;
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 9; ++i) t[k](i / 3, i % 3) = v[9 * k + i];
    aff = t;
  }
  c.coeffs = Coefficients::make(A, b, aff);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(j, "config", {"command", "domain", "coeffs", "data", "quadrature", "out", "seed", "threads", "probes",
                          "tolerances", "harmonic_measure", "verify", "convergence", "export"});
  RunConfig c;
  if (!j.contains("command")) throw InputError("config needs a command");
  c.command = parse_command(get<std::string>(j, "command", "", "config"));
  if (j.contains("domain")) parse_domain(j["domain"], c);
  if (j.contains("coeffs")) parse_coeffs(j["coeffs"], c);
  if (j.contains("data")) {
    only_keys(j["data"], "data", {"family", "params"});
    c.data.family = get<std::string>(j["data"], "family", "constant", "data");
    c.data.params = get<std::vector<double>>(j["data"], "params", {}, "data");
    BoundaryData probe(c.data, c.coeffs);  // validates family and parameters
    c.data_given = true;
  }
  if (j.contains("quadrature")) {
    const json& q = j["quadrature"];
    only_keys(q, "quadrature", {"reconstruct", "far_ratio", "mid_ratio", "far_degree", "mid_degree"});
    c.quad.reconstruct = get<bool>(q, "reconstruct", c.quad.reconstruct, "quadrature");
    c.quad.far_ratio = get<double>(q, "far_ratio", c.quad.far_ratio, "quadrature");
    c.quad.mid_ratio = get<double>(q, "mid_ratio", c.quad.mid_ratio, "quadrature");
    c.quad.far_degree = get<int>(q, "far_degree", c.quad.far_degree, "quadrature");
    c.quad.mid_degree = get<int>(q, "mid_degree", c.quad.mid_degree, "quadrature");
  }
  c.out = get<std::string>(j, "out", c.out, "config");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InputError("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  c.threads = get<int>(j, "threads", 0, "config");
  c.probes = get<int>(j, "probes", c.probes, "config");
  if (c.probes < 1) throw InputError("probes must be positive");
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    only_keys(t, "tolerances", {"interior_probe", "solve_residual", "max_condition", "crossval_relative",
                                "crossval_sigmas", "kernel_total", "ceilings"});
    Tolerances& T = c.tolerances;
    T.interior_probe = get<double>(t, "interior_probe", T.interior_probe, "tolerances");
    T.solve_residual = get<double>(t, "solve_residual", T.solve_residual, "tolerances");
    T.max_condition = get<double>(t, "max_condition", T.max_condition, "tolerances");
    T.crossval_relative = get<double>(t, "crossval_relative", T.crossval_relative, "tolerances");
    T.crossval_sigmas = get<double>(t, "crossval_sigmas", T.crossval_sigmas, "tolerances");
    T.kernel_total = get<double>(t, "kernel_total", T.kernel_total, "tolerances");
    T.ceilings = get<std::map<std::string, double>>(t, "ceilings", {}, "tolerances");
    for (double v : {T.interior_probe, T.solve_residual, T.max_condition, T.crossval_relative, T.crossval_sigmas,
                     T.kernel_total})
      if (!(v > 0)) throw InputError("tolerances must be positive");
    for (const auto& [k, v] : T.ceilings)
      if (!(v > 0)) throw InputError("ceiling for " + k + " must be positive");
  }
  if (j.contains("harmonic_measure")) {
    const json& h = j["harmonic_measure"];
    only_keys(h, "harmonic_measure", {"paths", "x0", "step", "kernel", "kernel_flat_subdivisions",
                                      "kernel_quadrature_order", "structure", "doubling_r_cap"});
    auto& H = c.harmonic_measure;
    H.paths = get<long long>(h, "paths", H.paths, "harmonic_measure");
    if (h.contains("x0")) H.x0 = vec3(h["x0"], "harmonic_measure.x0");
    H.step = get<double>(h, "step", H.step, "harmonic_measure");
    H.kernel = get<bool>(h, "kernel", H.kernel, "harmonic_measure");
    H.kernel_flat_subdivisions = get<int>(h, "kernel_flat_subdivisions", 0, "harmonic_measure");
    H.kernel_quadrature_order = get<int>(h, "kernel_quadrature_order", 0, "harmonic_measure");
    H.structure = get<std::vector<std::string>>(h, "structure", {}, "harmonic_measure");
    H.doubling_r_cap = get<double>(h, "doubling_r_cap", 0.0, "harmonic_measure");
    if (H.paths < 1000) throw InputError("harmonic_measure.paths must be at least 1000");
  }
  if (j.contains("verify")) {
    const json& v = j["verify"];
    only_keys(v, "verify", {"checks", "levels"});
    c.verify.checks = get<std::vector<std::string>>(v, "checks", {}, "verify");
    c.verify.levels = get<std::vector<int>>(v, "levels", {}, "verify");
  }
  if (j.contains("convergence")) {
    only_keys(j["convergence"], "convergence", {"levels"});
    c.convergence.levels = get<std::vector<int>>(j["convergence"], "levels", c.convergence.levels, "convergence");
  }
  if (j.contains("export")) {
    const json& e = j["export"];
    only_keys(e, "export", {"obj", "matrices", "solution_csv"});
    c.exports.obj = get<bool>(e, "obj", false, "export");
    c.exports.matrices = get<bool>(e, "matrices", false, "export");
    c.exports.solution_csv = get<bool>(e, "solution_csv", true, "export");
  }
  for (int l : c.verify.levels)
    if (l < 0 || l > c.domain.max_level) throw InputError("verify.levels out of range");
  for (int l : c.convergence.levels)
    if (l < 0 || l > c.domain.max_level) throw InputError("convergence.levels out of range");
  const bool needs_data = c.command == Command::solve_regularity || c.command == Command::solve_dirichlet_adjoint;
  if (needs_data && !c.data_given) throw InputError("command " + to_string(c.command) + " needs a data block");
  c.source_text = j.dump();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace driftbie
