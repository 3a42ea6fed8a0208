#include "driftbie/run.hpp"

#include "driftbie/verify.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace driftbie {

using nlohmann::json;
namespace fs = std::filesystem;

std::optional<std::function<double(const Vec3&)>> exact_solution(const DataSpec& data, const Coefficients& op) {
  if (op.antisym_affine) return std::nullopt;
  const auto& p = data.params;
  const bool no_drift = op.b.squaredNorm() == 0.0;
  const bool isotropic = (op.A - op.A.trace() / 3.0 * Mat3::Identity()).norm() < 1e-14;
  bool ok = false;
  if (data.family == "constant" || data.family == "fundamental") ok = true;
  if (data.family == "coordinate") ok = op.b[static_cast<int>(p[0])] == 0.0;
  if (data.family == "harmonic") ok = no_drift && (p[0] <= 1 || isotropic);
  if (data.family == "exponential") {
    const Vec3 a(p[0], p[1], p[2]);
    ok = std::abs(a.dot(op.A * a) - op.b.dot(a)) < 1e-13 * std::max(1.0, a.squaredNorm());
  }
  if (data.family == "quadratic") {
    Mat3 Q;
    Q << p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5];
    ok = no_drift && std::abs((op.A * Q).trace()) < 1e-13;
  }
  if (!ok) return std::nullopt;
  auto f = std::make_shared<BoundaryData>(data, op);
  return [f](const Vec3& x) { return f->value(x); };
}

std::vector<Vec3> probe_points(const BoundaryMesh& mesh, int count) {
  Eigen::AlignedBox3d box;
  for (const auto& v : mesh.vertices) box.extend(v);
  const double clear = 2.0 * mesh.panel_size();
  std::vector<Vec3> pts;
  for (int n = 6; n <= 48 && static_cast<int>(pts.size()) < count; n *= 2) {
    pts.clear();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const Vec3 t((i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n);
          const Vec3 x = box.min() + t.cwiseProduct(box.max() - box.min());
          if (mesh.locator().signed_distance(x) >= clear) pts.push_back(x);
        }
  }
  if (pts.empty()) pts.push_back(mesh.interior_point);
  if (static_cast<int>(pts.size()) <= count) return pts;
  std::vector<Vec3> out;
  for (int i = 0; i < count; ++i) out.push_back(pts[static_cast<size_t>(i) * pts.size() / count]);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) { return format_number(v); }

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// JSON numbers must be finite; non-finite constants become strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

json report_json(const CheckReport& r) {
  json j = {{"id", r.id},           {"inputs_digest", r.inputs_digest}, {"constant", number(r.constant)},
            {"ceiling", number(r.ceiling)}, {"pass", r.pass},        {"skipped", r.skipped}};
  json c = json::object();
  for (const auto& [k, v] : r.constants) c[k] = number(v);
  j["constants"] = c;
  if (!r.trend.empty()) {
    j["trend_levels"] = r.trend_levels;
    json t = json::array();
    for (double v : r.trend) t.push_back(number(v));
    j["trend"] = t;
  }
  j["notes"] = r.notes;
  return j;
}

json mesh_json(const BoundaryMesh& m) {
  return {{"kind", to_string(m.spec.kind)},
          {"level", m.spec.refinement_level},
          {"flat_subdivisions", m.spec.flat_subdivisions},
          {"quadrature_order", m.spec.quadrature_order},
          {"panels", m.num_panels()},
          {"nodes", m.num_nodes()},
          {"panel_size", m.panel_size()},
          {"diameter", m.diameter},
          {"total_area", m.total_area},
          {"inradius", m.inradius},
          {"interior_point", vec_json(m.interior_point)}};
}

double default_ceiling(const std::string& id) {
  static const std::map<std::string, double> table = {
      {"maximum-principle", 1e-2}, {"defining-property", 1e-4}, {"symmetry", 1e-12}, {"jump", 0.05},
      {"doubling", 4.2},           {"b2", 1.02}};
  const auto it = table.find(id);
  return it == table.end() ? std::numeric_limits<double>::infinity() : it->second;
}

// Residual-type checks should shrink under refinement; only growth counts against them.
// Estimate constants must stay within a factor 2 between consecutive levels.
bool trend_ok(const std::string& id, const std::vector<double>& trend) {
  static const std::set<std::string> residuals = {"maximum-principle", "jump", "symmetry", "defining-property"};
  const bool residual = residuals.count(id) > 0;
  for (size_t i = 1; i < trend.size(); ++i) {
    const double a = std::abs(trend[i - 1]), b = std::abs(trend[i]);
    if (!std::isfinite(a) || !std::isfinite(b)) return false;
    if (a == 0.0 || b == 0.0) continue;
    if (b / a >= 2.0) return false;
    if (!residual && a / b >= 2.0) return false;
  }
  return true;
}

class Runner {
 public:
  Runner(const RunConfig& cfg, std::function<void(const std::string&)> log) : cfg_(cfg), log_(std::move(log)) {}

  // Everything that can be rejected without computing: coefficients, mesh, data, seed.
  void validate() {
    coeffs_ = cfg_.coeffs;
    mesh_spec_ = cfg_.domain;
    mesh_ = build_mesh(mesh_spec_);
    if (cfg_.command == Command::harmonic_measure && !cfg_.seed)
      throw InputError("harmonic-measure needs a seed (config or --seed)");
    if (cfg_.command == Command::harmonic_measure) {
      const Vec3 x0 = cfg_.harmonic_measure.x0.value_or(mesh_->interior_point);
      if (!mesh_->locator().inside(x0)) throw InputError("harmonic_measure.x0 is not inside the domain");
      const auto& hm = cfg_.harmonic_measure;
      if (hm.kernel_quadrature_order != 0 && hm.kernel_quadrature_order != 1 && hm.kernel_quadrature_order != 3)
        throw InputError("harmonic_measure.kernel_quadrature_order must be 0, 1 or 3");
      for (const auto& s : hm.structure) parse_structure_check(s);
    }
    if (cfg_.command == Command::verify) {
      if (cfg_.verify.checks.empty()) throw InputError("verify needs a non-empty checks list");
      for (const auto& c : cfg_.verify.checks) category(c);
    }
    if (coeffs_.antisym_affine) {
      Eigen::AlignedBox3d box;
      for (const auto& v : mesh_->vertices) box.extend(v);
      sym_ = symmetrize_operator(coeffs_, box, cfg_.seed.value_or(1));
      coeffs_ = sym_->coeffs;
    }
    solver_.quad = cfg_.quad;
    solver_.max_condition = cfg_.tolerances.max_condition;
  }

  RunOutcome execute() {
    summary_["schema"] = 1;
    summary_["command"] = to_string(cfg_.command);
    summary_["config"] = json::parse(cfg_.source_text);
    if (cfg_.seed) summary_["seed"] = *cfg_.seed;
    summary_["mesh"] = mesh_json(*mesh_);
    if (sym_) {
      summary_["symmetrization"] = {{"b_tilde", vec_json(sym_->b_tilde)},
                                    {"divergence", sym_->divergence},
                                    {"weak_form_residual", sym_->weak_form_residual},
                                    {"b_effective", vec_json(coeffs_.b)}};
    }
    RunOutcome out;
    try {
      timed("total", [&] {
        switch (cfg_.command) {
          case Command::solve_regularity:
          case Command::solve_dirichlet_adjoint: solve(); break;
          case Command::harmonic_measure: harmonic_measure(); break;
          case Command::verify: verify(); break;
          case Command::convergence_study: convergence(); break;
        }
      });
      bool all = true;
      for (const auto& r : reports_) all = all && r.pass;
      summary_["status"] = all ? "pass" : "checks-failed";
      out.exit_code = all ? exit_ok : exit_checks_failed;
      out.message = all ? "all checks passed" : "some checks failed";
    } catch (const NumericalError& e) {
      summary_["status"] = "numerical-failure";
      summary_["diagnostic"] = e.what();
      out.exit_code = exit_numerical;
      out.message = e.what();
    } catch (const PoleError& e) {
      summary_["status"] = "numerical-failure";
      summary_["diagnostic"] = e.what();
      out.exit_code = exit_numerical;
      out.message = e.what();
    } catch (const Error& e) {
      summary_["status"] = "input-error";
      summary_["diagnostic"] = e.what();
      out.exit_code = exit_input;
      out.message = e.what();
    }
    json checks = json::array();
    for (const auto& r : reports_) checks.push_back(report_json(r));
    summary_["checks"] = checks;
    summary_["pass"] = out.exit_code == exit_ok;
    write("summary.json", summary_.dump(2) + "\n");
    json t = json::object();
    for (const auto& [k, v] : timings_) t[k] = v;
    write("timings.json", t.dump(2) + "\n");
    out.files = files_;
    return out;
  }

 private:
  enum class Category { interior, boundary, kernel, structure };

  static Category category(const std::string& id) {
    for (auto c : {InteriorCheck::maximum_principle, InteriorCheck::caccioppoli, InteriorCheck::harnack,
                   InteriorCheck::carleson})
      if (to_string(c) == id) return Category::interior;
    for (auto c : {BoundaryCheck::rellich_global, BoundaryCheck::rellich_local, BoundaryCheck::rellich_local_adjoint,
                   BoundaryCheck::u_by_gradient, BoundaryCheck::jump})
      if (to_string(c) == id) return Category::boundary;
    for (auto c : {KernelCheck::defining_property, KernelCheck::symmetry, KernelCheck::bounds,
                   KernelCheck::perturbation})
      if (to_string(c) == id) return Category::kernel;
    parse_structure_check(id);  // throws InputError for unknown names
    return Category::structure;
  }

  void say(const std::string& s) const {
    if (log_) log_(s);
  }

  template <class F>
  void timed(const std::string& name, F&& f) {
    const auto t0 = Clock::now();
    f();
    timings_[name] += std::chrono::duration<double>(Clock::now() - t0).count();
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream os(fs::path(cfg_.out) / name, std::ios::binary);
    if (!os) throw InputError("cannot write " + name);
    os << text;
    files_.push_back(name);
  }

  double ceiling_for(const std::string& id) const {
    const auto it = cfg_.tolerances.ceilings.find(id);
    return it != cfg_.tolerances.ceilings.end() ? it->second : default_ceiling(id);
  }

  CheckReport scalar_check(const std::string& id, double value, double ceiling, const std::string& what) {
    CheckReport r;
    r.id = id;
    r.inputs_digest = hex_digest(cfg_.source_text + "|" + id);
    r.constant = value;
    r.ceiling = ceiling;
    r.notes.push_back(what);
    r.judge();
    return r;
  }

  MeshPtr mesh_at(int level) const {
    DomainSpec s = mesh_spec_;
    s.refinement_level = level;
    return build_mesh(s);
  }

  DataSpec data_or(const DataSpec& fallback) const { return cfg_.data_given ? cfg_.data : fallback; }

  void maybe_export(const SingleLayerSystem& sys) {
    if (cfg_.exports.obj) {
      write_obj(*mesh_, (fs::path(cfg_.out) / "mesh.obj").string());
      files_.push_back("mesh.obj");
    }
    if (cfg_.exports.matrices) {
      DiscreteOperator op;
      op.matrix = sys.S();
      op.domain_space = Space::L2;
      op.range_space = Space::L2;
      op.quadrature_order = mesh_->spec.quadrature_order;
      op.singular_rule = cfg_.quad.rule;
      op.save((fs::path(cfg_.out) / "single_layer.bin").string());
      files_.push_back("single_layer.bin");
    }
  }

  // ---------------------------------------------------------------------------
  void solve() {
    const bool adjoint = cfg_.command == Command::solve_dirichlet_adjoint;
    const Coefficients op = adjoint ? coeffs_.adjoint() : coeffs_;
    const BoundaryData data(cfg_.data, op);
    const BoundaryField f = sample(mesh_, data);
    std::shared_ptr<SingleLayerSystem> sys;
    timed("assemble", [&] { sys = std::make_shared<SingleLayerSystem>(mesh_, coeffs_, solver_); });
    Solution sol;
    timed("solve", [&] { sol = adjoint ? solve_dirichlet_adjoint(*sys, f) : solve_regularity(*sys, f); });
    say("solve residual " + num(sol.residual) + ", condition " + num(sol.condition_estimate));
    summary_["solve"] = {{"kind", adjoint ? "adjoint-dirichlet" : "regularity"},
                         {"data", data.describe()},
                         {"residual", sol.residual},
                         {"condition_estimate", sol.condition_estimate}};
    reports_.push_back(scalar_check("solve-residual", sol.residual, cfg_.tolerances.solve_residual,
                                    "relative residual of the boundary solve"));

    const auto pts = probe_points(*mesh_, cfg_.probes);
    Vec u;
    std::vector<Vec3> g;
    timed("evaluate", [&] { evaluate_with_gradient(sol, pts, u, g); });
    const auto exact = exact_solution(cfg_.data, op);
    json probe = {{"count", pts.size()}, {"exact_available", exact.has_value()}};
    if (exact) {
      double err = 0, scale = 0;
      for (size_t i = 0; i < pts.size(); ++i) {
        const double e = (*exact)(pts[i]);
        err = std::max(err, std::abs(u[i] - e));
        scale = std::max(scale, std::abs(e));
      }
      const double rel = err / std::max(scale, 1e-300);
      probe["max_abs_error"] = err;
      probe["relative_error"] = rel;
      reports_.push_back(scalar_check("interior-probe", rel, cfg_.tolerances.interior_probe,
                                      "max interior error over probes relative to max |u|"));
    }
    summary_["interior_probe"] = probe;

    if (cfg_.exports.solution_csv) {
      std::ostringstream os;
      os << "x,y,z,u,ux,uy,uz,exact\n";
      for (size_t i = 0; i < pts.size(); ++i) {
        os << num(pts[i][0]) << ',' << num(pts[i][1]) << ',' << num(pts[i][2]) << ',' << num(u[i]) << ','
           << num(g[i][0]) << ',' << num(g[i][1]) << ',' << num(g[i][2]) << ','
           << (exact ? num((*exact)(pts[i])) : std::string("nan")) << '\n';
      }
      write("solution.csv", os.str());
      std::ostringstream ds;
      ds << "node,panel,x,y,z,density,data\n";
      for (int i = 0; i < mesh_->num_nodes(); ++i) {
        const Vec3& x = mesh_->nodes[i];
        ds << i << ',' << mesh_->node_panel[i] << ',' << num(x[0]) << ',' << num(x[1]) << ',' << num(x[2]) << ','
           << num(sol.density[i]) << ',' << num(f.values[i]) << '\n';
      }
      write("density.csv", ds.str());
    }
    maybe_export(*sys);
  }

  // ---------------------------------------------------------------------------
  void harmonic_measure() {
    const auto& hm = cfg_.harmonic_measure;
    const Vec3 x0 = hm.x0.value_or(mesh_->interior_point);
    MeasureParams mp;
    mp.step = hm.step;
    mp.keep_exit_points = cfg_.data_given;
    MeasureEstimate est;
    timed("monte_carlo", [&] { est = estimate_measure(*mesh_, coeffs_, x0, hm.paths, *cfg_.seed, mp); });
    say("monte carlo: " + std::to_string(est.exited) + " exits, mean steps " + num(est.mean_steps));
    json mc = {{"paths", est.paths},         {"exited", est.exited}, {"timeouts", est.timeouts},
               {"mean_steps", est.mean_steps}, {"step", est.step},     {"x0", vec_json(x0)}};

    std::optional<GreenKernel> gk;
    Vec pi;
    MeshPtr kmesh;
    if (hm.kernel) {
      DomainSpec ks = mesh_spec_;
      ks.flat_subdivisions = hm.kernel_flat_subdivisions;
      if (hm.kernel_quadrature_order) ks.quadrature_order = hm.kernel_quadrature_order;
      kmesh = ks.flat_subdivisions == mesh_spec_.flat_subdivisions && ks.quadrature_order == mesh_spec_.quadrature_order
                  ? mesh_
                  : build_mesh(ks);
      timed("kernel", [&] { gk = green_kernel(kmesh, coeffs_, x0, solver_); });
      pi = gk->panel_integrals(ks.flat_subdivisions > mesh_spec_.flat_subdivisions);
      if (pi.size() != mesh_->num_panels())
        throw UsageError("kernel mesh panels do not map onto the Monte Carlo mesh");
      summary_["kernel"] = {{"total", gk->total},
                            {"min", gk->k.values.minCoeff()},
                            {"max", gk->k.values.maxCoeff()},
                            {"panels", kmesh->num_panels()}};
      reports_.push_back(scalar_check("kernel-total", std::abs(gk->total - 1.0), cfg_.tolerances.kernel_total,
                                      "|integral of the kernel - 1|"));
      double worst = 0;
      int bad = 0;
      for (int j = 0; j < mesh_->num_panels(); ++j) {
        const double tol =
            std::max(cfg_.tolerances.crossval_relative * pi[j], cfg_.tolerances.crossval_sigmas * est.std_errors[j]);
        const double e = std::abs(est.probabilities[j] - pi[j]) / std::max(tol, 1e-300);
        worst = std::max(worst, e);
        bad += e > 1 ? 1 : 0;
      }
      mc["mismatched_panels"] = bad;
      auto r = scalar_check("cross-validation", worst, 1.0,
                            "max over panels of |p_MC - p_kernel| / max(rel * p_kernel, sigmas * se)");
      r.constants["mismatched_panels"] = bad;
      reports_.push_back(r);
    }
    summary_["monte_carlo"] = mc;

    if (cfg_.data_given) {
      const BoundaryData data(cfg_.data, coeffs_);
      double se = 0;
      const double mean = est.expectation(*mesh_, [&](const Vec3& x) { return data.value(x); }, &se);
      Solution sol;
      timed("solve", [&] { sol = solve_regularity(mesh_, coeffs_, sample(mesh_, data), solver_); });
      const double u0 = evaluate(sol, {x0})[0];
      const double rel = std::abs(mean - u0) / std::max(std::abs(u0), 1e-300);
      summary_["dirichlet_consistency"] = {
          {"monte_carlo", mean}, {"std_error", se}, {"solve", u0}, {"relative_difference", rel}};
      reports_.push_back(scalar_check("dirichlet-consistency", rel, ceiling_or("dirichlet-consistency", 0.02),
                                      "E f(X_exit) against the single layer solution at x0"));
    }

    std::ostringstream os;
    os << "panel,probability,std_error,kernel\n";
    for (int j = 0; j < mesh_->num_panels(); ++j)
      os << j << ',' << num(est.probabilities[j]) << ',' << num(est.std_errors[j]) << ','
         << (hm.kernel ? num(pi[j]) : std::string("nan")) << '\n';
    write("harmonic_measure.csv", os.str());

    if (!hm.structure.empty()) {
      if (!gk) throw UsageError("structure checks need the kernel (harmonic_measure.kernel = true)");
      StructureInputs in;
      in.mesh = kmesh;
      in.coeffs = coeffs_;
      in.x0 = x0;
      in.kernel = gk->k;
      in.green = &*gk;
      in.solver = solver_;
      in.r_cap = hm.doubling_r_cap;
      std::vector<CheckReport> reps;
      for (const auto& name : hm.structure) {
        in.ceiling = ceiling_for(name);
        CheckReport r;
        timed("structure", [&] { r = measure_structure_checks(in, parse_structure_check(name)); });
        reps.push_back(r);
        reports_.push_back(r);
      }
      std::ostringstream cs;
      write_reports_csv(reps, cs);
      write("structure.csv", cs.str());
    }
  }

  double ceiling_or(const std::string& id, double fallback) const {
    const auto it = cfg_.tolerances.ceilings.find(id);
    return it != cfg_.tolerances.ceilings.end() ? it->second : fallback;
  }

  // ---------------------------------------------------------------------------
  std::vector<Solution> family_solutions(const MeshPtr& mesh, const Coefficients& k, size_t limit) {
    SingleLayerSystem sys(mesh, k, solver_);
    std::vector<Solution> out;
    auto fam = smooth_test_family();
    if (cfg_.data_given) fam.insert(fam.begin(), cfg_.data);
    for (size_t i = 0; i < fam.size() && i < limit; ++i)
      out.push_back(solve_regularity(sys, sample(mesh, BoundaryData(fam[i], k))));
    return out;
  }

  CheckReport check_at(const std::string& id, int level) {
    const MeshPtr mesh = mesh_at(level);
    const double ceiling = ceiling_for(id);
    switch (category(id)) {
      case Category::interior: {
        InteriorOptions o;
        o.ceiling = ceiling;
        if (id == to_string(InteriorCheck::carleson)) {
          auto G = std::make_shared<DomainGreen>(std::make_shared<const SingleLayerSystem>(mesh, coeffs_, solver_));
          return interior_checks(subject_of(G, mesh->interior_point), InteriorCheck::carleson, o);
        }
        const DataSpec d = data_or(DataSpec{"coordinate", {2}});
        const Solution sol = solve_regularity(mesh, coeffs_, sample(mesh, BoundaryData(d, coeffs_)), solver_);
        InteriorCheck c = InteriorCheck::maximum_principle;
        for (auto x : {InteriorCheck::maximum_principle, InteriorCheck::caccioppoli, InteriorCheck::harnack})
          if (to_string(x) == id) c = x;
        return interior_checks(subject_of(sol), c, o);
      }
      case Category::boundary: {
        BoundaryCheckOptions o;
        o.ceiling = ceiling;
        o.layer.quad = cfg_.quad;
        if (id == to_string(BoundaryCheck::jump)) return jump_check(mesh, coeffs_, smooth_test_family(), o);
        if (id == to_string(BoundaryCheck::rellich_global))
          return boundary_checks(family_solutions(mesh, coeffs_, 11), BoundaryCheck::rellich_global, o);
        if (id == to_string(BoundaryCheck::rellich_local))
          return boundary_checks(family_solutions(mesh, coeffs_, 3), BoundaryCheck::rellich_local, o);
        if (id == to_string(BoundaryCheck::rellich_local_adjoint))
          return boundary_checks(family_solutions(mesh, coeffs_.adjoint(), 3), BoundaryCheck::rellich_local_adjoint, o);
        return boundary_checks(family_solutions(mesh, coeffs_, 1), BoundaryCheck::u_by_gradient, o);
      }
      case Category::kernel: {
        KernelCheckOptions o;
        o.ceiling = ceiling;
        o.seed = cfg_.seed.value_or(1);
        KernelCheck c = KernelCheck::defining_property;
        for (auto x : {KernelCheck::defining_property, KernelCheck::symmetry, KernelCheck::bounds,
                       KernelCheck::perturbation})
          if (to_string(x) == id) c = x;
        return kernel_checks(coeffs_, c, o);
      }
      case Category::structure: {
        const Vec3 x0 = cfg_.harmonic_measure.x0.value_or(mesh->interior_point);
        GreenKernel gk = green_kernel(mesh, coeffs_, x0, solver_);
        StructureInputs in;
        in.mesh = mesh;
        in.coeffs = coeffs_;
        in.x0 = x0;
        in.kernel = gk.k;
        in.green = &gk;
        in.solver = solver_;
        in.r_cap = cfg_.harmonic_measure.doubling_r_cap;
        in.ceiling = ceiling;
        return measure_structure_checks(in, parse_structure_check(id));
      }
    }
    throw InputError("unknown check " + id);
  }

  void verify() {
    std::vector<int> levels = cfg_.verify.levels;
    if (levels.empty()) levels = {mesh_spec_.refinement_level};
    std::vector<CheckReport> reps;
    for (const auto& id : cfg_.verify.checks) {
      CheckReport r;
      timed("check:" + id, [&] {
        if (category(id) == Category::kernel || levels.size() == 1) {
          r = check_at(id, levels.back());
        } else {
          r = refinement_trend([&](int l) { return check_at(id, l); }, levels);
          r.judge();
          if (r.pass && !trend_ok(id, r.trend)) {
            r.pass = false;
            r.notes.push_back("constant varies by 2x or more across levels");
          }
        }
      });
      say(id + ": " + num(r.constant) + (r.pass ? " pass" : " FAIL"));
      reps.push_back(r);
      reports_.push_back(r);
    }
    std::ostringstream os;
    write_reports_csv(reps, os);
    write("checks.csv", os.str());
  }

  // ---------------------------------------------------------------------------
  void convergence() {
    std::ostringstream os;
    os << "level,panels,nodes,panel_size,jump_residual,rellich_global,solve_residual,probe_error\n";
    std::vector<double> jumps;
    const DataSpec d = data_or(DataSpec{"coordinate", {2}});
    const auto exact = exact_solution(d, coeffs_);
    json rows = json::array();
    for (int level : cfg_.convergence.levels) {
      const MeshPtr mesh = mesh_at(level);
      BoundaryCheckOptions o;
      o.layer.quad = cfg_.quad;
      CheckReport jump, rell;
      Solution sol;
      timed("level" + std::to_string(level), [&] {
        jump = jump_check(mesh, coeffs_, smooth_test_family(), o);
        if (!coeffs_.antisym_affine) rell = boundary_checks(family_solutions(mesh, coeffs_, 11), BoundaryCheck::rellich_global, o);
        sol = solve_regularity(mesh, coeffs_, sample(mesh, BoundaryData(d, coeffs_)), solver_);
      });
      double perr = std::numeric_limits<double>::quiet_NaN();
      if (exact) {
        const auto pts = probe_points(*mesh, cfg_.probes);
        const Vec u = evaluate(sol, pts);
        double err = 0, scale = 0;
        for (size_t i = 0; i < pts.size(); ++i) {
          const double e = (*exact)(pts[i]);
          err = std::max(err, std::abs(u[i] - e));
          scale = std::max(scale, std::abs(e));
        }
        perr = err / std::max(scale, 1e-300);
      }
      jumps.push_back(jump.constant);
      os << level << ',' << mesh->num_panels() << ',' << mesh->num_nodes() << ',' << num(mesh->panel_size()) << ','
         << num(jump.constant) << ',' << num(rell.constant) << ',' << num(sol.residual) << ',' << num(perr) << '\n';
      rows.push_back({{"level", level},
                      {"panels", mesh->num_panels()},
                      {"jump_residual", number(jump.constant)},
                      {"rellich_global", number(rell.constant)},
                      {"solve_residual", sol.residual},
                      {"probe_error", number(perr)}});
      say("level " + std::to_string(level) + ": jump " + num(jump.constant));
    }
    summary_["levels"] = rows;
    write("convergence.csv", os.str());
    bool monotone = true;
    double worst_ratio = 0;
    for (size_t i = 1; i < jumps.size(); ++i) {
      monotone = monotone && jumps[i] <= jumps[i - 1];
      if (jumps[i - 1] > 0) worst_ratio = std::max(worst_ratio, jumps[i] / jumps[i - 1]);
    }
    CheckReport r = scalar_check("jump-monotone", worst_ratio, 1.0, "max ratio of consecutive jump residuals");
    r.pass = monotone;
    r.trend_levels = cfg_.convergence.levels;
    r.trend = jumps;
    reports_.push_back(r);
  }

  const RunConfig& cfg_;
  std::function<void(const std::string&)> log_;
  Coefficients coeffs_;
  DomainSpec mesh_spec_;
  MeshPtr mesh_;
  std::optional<Symmetrized> sym_;
  SolverOptions solver_;
  json summary_;
  std::vector<CheckReport> reports_;
  std::map<std::string, double> timings_;
  std::vector<std::string> files_;
};

}  // namespace

RunOutcome run(const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  Runner r(cfg, log);
  try {
    r.validate();
  } catch (const Error& e) {
    return {exit_input, e.what(), {}};
  }
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) return {exit_input, "cannot create output directory " + cfg.out + ": " + ec.message(), {}};
  return r.execute();
}

}  // namespace driftbie
