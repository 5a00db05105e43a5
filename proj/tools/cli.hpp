#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dho::cli {

/// Stable exit codes for scripting.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsageError = 2,
  kDiverged = 3,
};

/// Entry point shared by the `dholab` binary and the tests. `args` is argv: args[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dho::cli
