#pragma once

#include <string>
#include <vector>

namespace storypipe::cli {

// Parses and executes one command line. `args` excludes the program name.
// Returns the process exit code: 0 on success, 1 on runtime failures
// (failed stages, provider faults, fit or manifest violations), 2 on usage,
// configuration, or document-parse errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace storypipe::cli
