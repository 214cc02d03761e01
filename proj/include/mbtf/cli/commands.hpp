#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbtf::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kInternalError = 3 };

// Runs the command line `args` (args[0] is the program name) and returns the
// process exit code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads `key = value` lines; blank lines and `#` comments are skipped.
std::vector<std::pair<std::string, std::string>> read_command_config(const std::string& path);

}  // namespace mbtf::cli
