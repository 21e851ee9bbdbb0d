#ifndef CONIC_SCENARIO_HPP
#define CONIC_SCENARIO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conic/geometry.hpp"
#include "conic/io.hpp"

namespace conic {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTolerance = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr const char* kToolVersion = "1.0.0";

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// One batch run. The JSON form:
///   { "manifold": {"model": "...", "n": 2, "params": {...}},
///     "command": "trace" | "sojourn" | "smatrix" | "propagator" | "legendrian" | "validate" | "trapping",
///     "lambda0": 1.0, "parameters": {...}, "output": "dir", "seed": 0, "jobs": 0,
///     "tolerances": {"name": value} }
/// Unknown keys are rejected at every level, including inside "parameters".
struct Scenario {
  std::string model = "flat";
  int n = 2;
  ParameterMap params;
  std::string command;
  double lambda0 = 1.0;
  Json parameters = Json::object();
  std::string output_dir = "out";
  std::map<std::string, double> tolerances;  // overrides of the command defaults
  std::uint64_t seed = 0;
  unsigned jobs = 0;  // 0: CONIC_JOBS, else hardware concurrency
};

const std::vector<std::string>& scenario_commands();

/// Throws SchemaError for unknown commands.
std::map<std::string, double> default_tolerances(const std::string& command);

/// Throws SchemaError, with "line L, column C" for malformed JSON.
Scenario parse_scenario(const std::string& text);

/// {"name": value} merged over the scenario's tolerances; names must be known to the command.
void apply_tolerance_overrides(Scenario& s, const std::string& text);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<std::string> files;  // relative to the output directory
  std::vector<CheckResult> checks;
  std::string message;
};

/// Runs the command, writes its artifacts and manifest.json into output_dir. Exit code 1
/// iff a configured tolerance check fails; 2 for schema problems found while reading the
/// parameter block; 3 for numerical failures (no convergence, trapping, caustics, ...).
RunResult execute_scenario(const Scenario& s);

}  // namespace conic

#endif  // CONIC_SCENARIO_HPP
