#pragma once

#include <string>
#include <vector>

namespace semrag {

/// Runs one CLI command (args exclude the program name) and returns the
/// process exit code: 0 success, 2 configuration or input error, 3 provider
/// error, 1 anything else. Errors print to stderr.
int run_cli(const std::vector<std::string>& args);

} // namespace semrag
