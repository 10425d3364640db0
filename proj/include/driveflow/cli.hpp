#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace driveflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

/// Runs `driveflow <command> ...`; `args` excludes the program name.
/// Commands: generate, project, train, eval, predict.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace driveflow::cli
