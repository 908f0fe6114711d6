#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mesokappa/quadrature.hpp"
#include "mesokappa/simulator.hpp"

namespace mesokappa::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int {
  kOk = 0,
  kVerdictFailure = 1,
  kUsage = 2,
  kNonConvergence = 3,
  kMissingInput = 4,
};

// Every tunable of every command. Defaults live here and nowhere else.
struct RunConfig {
  std::string kernel = "gg3";
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir = "results";
  std::string format = "json";

  QuadratureSpec quadrature;

  long check_samples = 100000;
  double check_tolerance = 1e-9;

  int window = 2;
  int degree = 3;
  long long var_samples = 10000000;
  int var_batches = 64;

  SimConfig sim;
  std::string estimator = "direct";
  bool event_log = false;

  RunConfig();
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// INI text with one section per command family. Doubles are written in
// shortest round-trip form, so parsing the text back gives an equal config.
std::string to_ini(const RunConfig& cfg);
void apply_ini(RunConfig& cfg, std::istream& in);
// Sets one value addressed as "section.key".
void apply_setting(RunConfig& cfg, const std::string& assignment);
nlohmann::ordered_json to_json(const RunConfig& cfg);
bool operator==(const RunConfig& a, const RunConfig& b);

// Entry point of the command-line tool; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mesokappa::cli
