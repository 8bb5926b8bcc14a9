#pragma once

#include <string>
#include <vector>

namespace gpomp::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Runs one command line (without the program name); returns the exit status.
int run(const std::vector<std::string>& args);

}  // namespace gpomp::cli
