#pragma once

// Command-line front end. `run_cli` is the whole program; main() only
// forwards argv so tests can drive the commands in-process.

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace gtrack::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Runs one command line; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gtrack::cli
