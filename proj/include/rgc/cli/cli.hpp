#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rgc::cli {

inline constexpr const char* kToolVersion = "rgc 0.1.0";
/// Default output root when --out is not given.
inline constexpr const char* kOutputRootEnv = "RGC_OUTPUT_ROOT";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitMissingFile = 3,
  kExitInvariant = 4,
};

/// Runs one subcommand (gen-data, train-detector, train-policy, eval,
/// rollout, capacity). `args` excludes the program name. Reports go to `out`,
/// diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace rgc::cli
