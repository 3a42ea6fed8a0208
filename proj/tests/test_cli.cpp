#include "driftbie/config.hpp"
#include "driftbie/run.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace driftbie;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::path("cli_work");

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const json& j) {
  fs::create_directories(kWork);
  const fs::path p = kWork / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DRIFTBIE_CLI) + " --quiet " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json solve_config() {
  return json{{"command", "solve-regularity"},
              {"domain", {{"kind", "sphere"}, {"level", 3}}},
              {"coeffs", {{"A", {1, 0, 0, 0, 1, 0, 0, 0, 1}}, {"b", {0, 0, 0}}}},
              {"data", {{"family", "coordinate"}, {"params", {2}}}},
              {"export", {{"obj", true}, {"matrices", true}}}};
}

const json* find_check(const json& summary, const std::string& id) {
  for (const auto& c : summary["checks"])
    if (c["id"] == id) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_config(solve_config().dump());
  CHECK(c.command == Command::solve_regularity);
  CHECK(c.domain.refinement_level == 3);
  CHECK(c.data.family == "coordinate");

  json bad = solve_config();
  bad["coeffs"]["A"] = {1, 0, 0, 0, -1, 0, 0, 0, 1};
  CHECK_THROWS_AS(parse_config(bad.dump()), InputError);
  json unknown = solve_config();
  unknown["domian"] = json::object();
  CHECK_THROWS_AS(parse_config(unknown.dump()), InputError);
  json nodata = solve_config();
  nodata.erase("data");
  CHECK_THROWS_AS(parse_config(nodata.dump()), InputError);
  json family = solve_config();
  family["data"]["family"] = "sawtooth";
  CHECK_THROWS_AS(parse_config(family.dump()), InputError);
  json tol = solve_config();
  tol["tolerances"] = {{"interior_probe", -1}};
  CHECK_THROWS_AS(parse_config(tol.dump()), InputError);
  CHECK_THROWS_AS(parse_config("{not json"), InputError);
}

TEST_CASE("exact solutions for the closed-form families") {
  const auto lap = Coefficients::laplace();
  CHECK(exact_solution({"coordinate", {2}}, lap).has_value());
  CHECK(!exact_solution({"gaussian", {0, 0, 0, 1}}, lap).has_value());
  const auto drift = Coefficients::make(Mat3::Identity(), Vec3(1, 0, 0));
  const auto e = exact_solution({"exponential", {1, 0, 0}}, drift);
  REQUIRE(e.has_value());
  CHECK((*e)(Vec3(0.3, 0.1, 0)) == doctest::Approx(std::exp(0.3)));
}

TEST_CASE("solve-regularity end to end") {
  const fs::path cfg = write_config("solve", solve_config());
  const fs::path out = kWork / "solve_out";
  fs::remove_all(out);
  REQUIRE(cli("--config " + cfg.string() + " --out " + out.string()) == 0);
  const json s = json::parse(slurp(out / "summary.json"));
  CHECK(s["schema"] == 1);
  CHECK(s["command"] == "solve-regularity");
  CHECK(s["pass"] == true);
  const json* probe = find_check(s, "interior-probe");
  REQUIRE(probe != nullptr);
  CHECK((*probe)["constant"].get<double>() <= 0.01);
  for (const char* f : {"solution.csv", "density.csv", "mesh.obj", "single_layer.bin", "timings.json"})
    CHECK(fs::exists(out / f));
  CHECK(slurp(out / "solution.csv").rfind("x,y,z,u,ux,uy,uz,exact\n", 0) == 0);

  const DiscreteOperator S = DiscreteOperator::load((out / "single_layer.bin").string());
  CHECK(S.matrix.rows() == 1280);
  CHECK(S.matrix.cols() == 1280);

  // rerun: byte-identical outputs except wall-clock timings
  const std::string first = slurp(out / "summary.json"), csv = slurp(out / "solution.csv");
  const std::string bin = slurp(out / "single_layer.bin");
  REQUIRE(cli("--config " + cfg.string() + " --out " + out.string() + " --threads 2") == 0);
  CHECK(slurp(out / "summary.json") == first);
  CHECK(slurp(out / "solution.csv") == csv);
  CHECK(slurp(out / "single_layer.bin") == bin);
}

TEST_CASE("input errors exit 2 without output") {
  json bad = solve_config();
  bad["coeffs"]["A"] = {1, 0, 0, 0, 1, 0, 0, 0, -2};
  const fs::path cfg = write_config("bad", bad);
  const fs::path out = kWork / "bad_out";
  fs::remove_all(out);
  CHECK(cli("--config " + cfg.string() + " --out " + out.string()) == 2);
  CHECK(!fs::exists(out));

  CHECK(cli("--config " + (kWork / "missing.json").string()) == 2);
  CHECK(cli("--config " + cfg.string() + " --threads -3") == 2);

  json hm = {{"command", "harmonic-measure"}, {"domain", {{"level", 1}}}};
  const fs::path hcfg = write_config("noseed", hm);
  const fs::path hout = kWork / "noseed_out";
  fs::remove_all(hout);
  CHECK(cli("--config " + hcfg.string() + " --out " + hout.string()) == 2);
  CHECK(!fs::exists(hout));
}

TEST_CASE("failed ceilings exit 3") {
  json j = solve_config();
  j["domain"]["level"] = 1;
  j["tolerances"] = {{"interior_probe", 1e-9}};
  j.erase("export");
  const fs::path cfg = write_config("strict", j);
  const fs::path out = kWork / "strict_out";
  fs::remove_all(out);
  CHECK(cli("--config " + cfg.string() + " --out " + out.string()) == 3);
  const json s = json::parse(slurp(out / "summary.json"));
  CHECK(s["pass"] == false);
  CHECK(s["status"] == "checks-failed");
}

TEST_CASE("harmonic-measure seed override and csv") {
  json j = {{"command", "harmonic-measure"},
            {"domain", {{"level", 1}}},
            {"seed", 5},
            {"harmonic_measure", {{"paths", 2000}, {"kernel", false}}}};
  const fs::path cfg = write_config("hm", j);
  const fs::path a = kWork / "hm_a", b = kWork / "hm_b", c = kWork / "hm_c";
  for (const auto& p : {a, b, c}) fs::remove_all(p);
  REQUIRE(cli("--config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(cli("--config " + cfg.string() + " --out " + b.string() + " --seed 5 --threads 3") == 0);
  REQUIRE(cli("--config " + cfg.string() + " --out " + c.string() + " --seed 6") == 0);
  CHECK(slurp(a / "harmonic_measure.csv") == slurp(b / "harmonic_measure.csv"));
  CHECK(slurp(a / "harmonic_measure.csv") != slurp(c / "harmonic_measure.csv"));
  CHECK(slurp(a / "harmonic_measure.csv").rfind("panel,probability,std_error,kernel\n", 0) == 0);
  CHECK(json::parse(slurp(c / "summary.json"))["seed"] == 6);
}

TEST_CASE("verify command writes one row per check") {
  json j = {{"command", "verify"},
            {"domain", {{"level", 2}}},
            {"verify", {{"checks", {"symmetry", "maximum-principle", "caccioppoli"}}}}};
  const fs::path cfg = write_config("verify", j);
  const fs::path out = kWork / "verify_out";
  fs::remove_all(out);
  REQUIRE(cli("--config " + cfg.string() + " --out " + out.string()) == 0);
  std::istringstream csv(slurp(out / "checks.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "id,constant,ceiling,pass,levels");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3);
}
