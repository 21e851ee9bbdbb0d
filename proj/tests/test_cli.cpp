#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "conic/scenario.hpp"

using namespace conic;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "conic_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Runs the tool on a config written to dir; returns the exit status.
int run_cli(const fs::path& dir, const std::string& config, const std::string& extra = "") {
  write_text(dir / "scenario.json", config);
  const std::string cmd = std::string(CONIC_CLI_PATH) + " --config " + (dir / "scenario.json").string() +
                          " --out " + (dir / "out").string() + " " + extra + " > " +
                          (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

const char* kFlatSojourn = R"({
  "manifold": {"model": "flat", "n": 2},
  "command": "sojourn",
  "lambda0": 1.5,
  "seed": 11,
  "parameters": {"random": {"count": 25, "radius": 4.0}}
})";

}  // namespace

TEST_CASE("malformed JSON reports line and column") {
  const fs::path d = scratch("malformed");
  CHECK(run_cli(d, "{\n  \"manifold\": {\"model\": \"flat\",\n  \"command\" \"sojourn\"\n}") == kExitSchema);
  const std::string err = read_text(d / "stderr.txt");
  CHECK(err.find("line 3, column") != std::string::npos);

  try {
    parse_scenario("{\"a\": 1,,}");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 1, column 9") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_scenario(R"({"manifold": {"model": "flat"}, "command": "sojourn", "colour": 1})"), SchemaError);
  CHECK_THROWS_AS(parse_scenario(R"({"manifold": {"model": "flat", "dim": 2}, "command": "sojourn"})"), SchemaError);
  CHECK_THROWS_AS(parse_scenario(R"({"manifold": {"model": "flat"}, "command": "sail"})"), SchemaError);
  CHECK_THROWS_AS(parse_scenario(R"({"manifold": {"model": "flat"}, "command": "trace", "tolerances": {"ratio": 1}})"), SchemaError);

  const fs::path d = scratch("unknown");
  CHECK(run_cli(d, R"({"manifold": {"model": "flat"}, "command": "sojourn",
                       "parameters": {"random": {"count": 3, "radius": 1, "shape": "ball"}}})") == kExitSchema);
  CHECK(read_text(d / "stderr.txt").find("shape") != std::string::npos);
  CHECK(run_cli(d, R"({"manifold": {"model": "torus"}, "command": "sojourn", "parameters": {"random": {}}})") == kExitSchema);
  CHECK(fs::exists(d / "out" / "manifest.json"));
}

TEST_CASE("flat sojourn scenario") {
  const fs::path d = scratch("flat_sojourn");
  REQUIRE(run_cli(d, kFlatSojourn) == kExitOk);
  const std::string csv = read_text(d / "out" / "sojourn.csv");
  CHECK(csv.rfind("y_in_1,y_in_2,y_out_1,y_out_2,nu,M_1,M_2,tau", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
  CHECK(csv.find('\r') == std::string::npos);

  const Json manifest = Json::parse(read_text(d / "out" / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["version"] == kToolVersion);
  CHECK(manifest["tolerances"].contains("flat_nu"));
  CHECK(manifest["timings"]["total_seconds"].get<double>() >= 0.0);
  CHECK(manifest["seed"] == 11);
}

TEST_CASE("inverse-square validate scenario") {
  const fs::path d = scratch("validate");
  CHECK(run_cli(d, R"({"manifold": {"model": "inverse-square", "params": {"c": 1.0}},
                       "command": "validate", "lambda0": 1.2})") == kExitOk);
  const Json report = Json::parse(read_text(d / "out" / "validate.json"));
  CHECK(report["pass"] == true);
  CHECK(report["checks"][0]["value"].get<double>() <= 1e-6);

  // No closed form for the bump model.
  CHECK(run_cli(d, R"({"manifold": {"model": "bump-metric"}, "command": "validate"})") == kExitSchema);
}

TEST_CASE("tolerance failures exit 1") {
  const fs::path d = scratch("tolerance");
  write_text(d / "tight.json", R"({"flat_nu": 0})");
  CHECK(run_cli(d, kFlatSojourn, "--tol-overrides " + (d / "tight.json").string()) == kExitTolerance);
  const Json manifest = Json::parse(read_text(d / "out" / "manifest.json"));
  CHECK(manifest["status"] == "tolerance_failure");
  CHECK(manifest["tolerances"]["flat_nu"] == 0.0);

  write_text(d / "bad.json", R"({"lagrangian": 1})");
  CHECK(run_cli(d, kFlatSojourn, "--tol-overrides " + (d / "bad.json").string()) == kExitSchema);
}

TEST_CASE("numerical failures exit 3") {
  // A trapped seed cannot produce sojourn limits.
  const fs::path d = scratch("numerical");
  CHECK(run_cli(d, R"({"manifold": {"model": "bump-metric", "params": {"amplitude": 10}},
                       "command": "sojourn",
                       "parameters": {"points": [{"z": [0, 1.2], "zeta": [1, 0]}], "s_max": 5e3}})") == kExitNumerical);
}

TEST_CASE("output is deterministic across runs and job counts") {
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  REQUIRE(run_cli(a, kFlatSojourn, "--jobs 1") == kExitOk);
  REQUIRE(run_cli(b, kFlatSojourn, "--jobs 1") == kExitOk);
  REQUIRE(run_cli(c, kFlatSojourn, "--jobs 4") == kExitOk);
  const std::string first = read_text(a / "out" / "sojourn.csv");
  CHECK(first == read_text(b / "out" / "sojourn.csv"));
  CHECK(first == read_text(c / "out" / "sojourn.csv"));

  // --seed overrides the scenario and changes the sample.
  const fs::path e = scratch("det_e");
  REQUIRE(run_cli(e, kFlatSojourn, "--seed 12") == kExitOk);
  CHECK(first != read_text(e / "out" / "sojourn.csv"));

  const std::string trace = R"({"manifold": {"model": "inverse-square", "params": {"c": 1.0}},
    "command": "trace",
    "parameters": {"points": [{"z": [-5, 1], "zeta": [1, 0]}, {"z": [0, 2], "zeta": [1, 0.2]}],
                   "s_max": 30, "escape_radius": 50}})";
  REQUIRE(run_cli(a, trace, "--jobs 1") == kExitOk);
  REQUIRE(run_cli(c, trace, "--jobs 3") == kExitOk);
  CHECK(read_text(a / "out" / "trace.csv") == read_text(c / "out" / "trace.csv"));
}

TEST_CASE("artifacts of the remaining commands") {
  const fs::path d = scratch("artifacts");
  REQUIRE(run_cli(d, R"({"manifold": {"model": "flat", "n": 2}, "command": "propagator",
    "parameters": {"grid": {"min": [-1, 0], "max": [1, 0], "count": [3, 1]}, "zp": [0, 0.5],
                   "t": [0.1, 0.5]}})") == kExitOk);
  const std::string prop = read_text(d / "out" / "propagator.csv");
  CHECK(prop.rfind("z_1,z_2,zp_1,zp_2,t,re,im,a0,caustic_flag\n", 0) == 0);
  CHECK(std::count(prop.begin(), prop.end(), '\n') == 7);
  CHECK(fs::exists(d / "out" / "propagator.gp"));

  REQUIRE(run_cli(d, R"({"manifold": {"model": "inverse-square", "params": {"c": 0.5}}, "command": "smatrix",
    "parameters": {"y_in": [1, 0], "deflection": 0.4, "lambda": [1, 3]}})") == kExitOk);
  const std::string sm = read_text(d / "out" / "smatrix.csv");
  CHECK(sm.rfind("y_in_1,y_in_2,y_out_1,y_out_2,lambda,re,im,n_geodesics", 0) == 0);
  const Json side = Json::parse(read_text(d / "out" / "smatrix.json"));
  CHECK(side["directions"][0]["geodesics"].size() >= 1);

  REQUIRE(run_cli(d, R"({"manifold": {"model": "flat"}, "command": "legendrian",
    "parameters": {"seeds": [{"z": [0, 1], "zeta": [1, 0]}], "grid": [[1, 2], [3, -1]]}})") == kExitOk);
  const Json leg = Json::parse(read_text(d / "out" / "legendrian.json"));
  CHECK(leg["lagrangian"]["pairs"].get<int>() > 0);
  for (const auto& c : leg["checks"]) CHECK(c["pass"] == true);

  REQUIRE(run_cli(d, R"({"manifold": {"model": "flat"}, "command": "trapping",
    "parameters": {"seed_count": 20, "s_max": 100, "escape_radius": 50}})") == kExitOk);
  const Json trap = Json::parse(read_text(d / "out" / "trapping.json"));
  CHECK(trap["trapped"] == 0);
}
