#pragma once

// Command-line front end. Settings resolve with precedence
// flags > environment > --config file > defaults.

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace mpisentinel::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSampleFailures = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInternal = 3;

using Environment = std::map<std::string, std::string>;

/// MPISENTINEL_COMPILER_CMD and MPISENTINEL_JOBS from the process environment.
Environment process_environment();

/// Runs one invocation; `args` excludes the program name. Errors are written
/// to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env = {});

}  // namespace mpisentinel::cli
