#include <iostream>

#include <CLI11.hpp>

#include "conic/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"conic: scattering computations on asymptotically conic model manifolds"};
  app.set_version_flag("--version", std::string(conic::kToolVersion));
  std::string config, out, tol_path;
  unsigned jobs = 0;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "scenario JSON")->required();
  auto* out_opt = app.add_option("--out", out, "output directory (overrides the scenario)");
  auto* jobs_opt = app.add_option("--jobs", jobs, "worker threads (default: CONIC_JOBS, else all cores)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the scenario)");
  app.add_option("--tol-overrides", tol_path, "JSON object of tolerance overrides");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : conic::kExitSchema;
  }

  conic::Scenario s;
  try {
    s = conic::parse_scenario(conic::read_text(config));
    if (!tol_path.empty()) conic::apply_tolerance_overrides(s, conic::read_text(tol_path));
  } catch (const conic::Error& e) {
    std::cerr << "conic: " << config << ": " << e.what() << "\n";
    return conic::kExitSchema;
  }
  if (*out_opt) s.output_dir = out;
  if (*jobs_opt) s.jobs = jobs;
  if (*seed_opt) s.seed = seed;

  const conic::RunResult r = conic::execute_scenario(s);
  for (const conic::CheckResult& c : r.checks)
    std::cout << (c.pass ? "pass " : "FAIL ") << c.name << " " << conic::format_double(c.value)
              << " <= " << conic::format_double(c.tolerance) << "\n";
  if (r.exit_code != conic::kExitOk) std::cerr << "conic: " << r.message << "\n";
  std::cout << "wrote " << r.files.size() + 1 << " files to " << s.output_dir << "\n";
  return r.exit_code;
}
