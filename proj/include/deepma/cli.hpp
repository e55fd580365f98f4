#pragma once

#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace deepma {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitNumerical = 3,
};

enum class LogLevel { quiet, info, debug };

// DEEPMA_LOG = quiet | info | debug; unset means info.
LogLevel log_level_from_env();

// Every key a config file may set.
const std::set<std::string>& config_keys();

// `deepma <train|eval|scenario|detect> --config <path> [--seed <u64>] [--out <dir>]`.
// args excludes the program name. Diagnostics go to `log`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log,
            LogLevel level = LogLevel::info);

}  // namespace deepma
