#include "driftbie/run.hpp"

#include <CLI11.hpp>

#include <omp.h>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"driftbie: boundary integral solvers and estimate checks for elliptic operators with drift"};
  std::string config;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  app.add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed, "random seed, overrides the config");
  app.add_option("--out", out, "output directory, overrides the config");
  app.add_flag("--quiet", quiet, "no progress lines on stderr");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : driftbie::exit_input;
  }

  driftbie::RunConfig cfg;
  try {
    cfg = driftbie::load_config(config);
  } catch (const driftbie::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return driftbie::exit_input;
  }
  if (seed) cfg.seed = seed;
  if (!out.empty()) cfg.out = out;
  if (threads > 0) cfg.threads = threads;
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  auto log = [quiet](const std::string& s) {
    if (!quiet) std::cerr << s << '\n';
  };
  const driftbie::RunOutcome r = driftbie::run(cfg, log);
  if (r.exit_code == driftbie::exit_ok)
    log(r.message);
  else
    std::cerr << (r.exit_code == driftbie::exit_checks_failed ? "checks failed: " : "error: ") << r.message << '\n';
  return r.exit_code;
}
