#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gwlz::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kIo = 4 };

/// Runs one invocation. `args` excludes the program name. Machine-readable
/// output goes to `out`, notes and warnings to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gwlz::cli
