#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mcdrop {

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name). Failures print
/// a single "error: ..." line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcdrop
