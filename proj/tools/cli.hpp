#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spatialprobe::cli {

enum ExitCode : int { kOk = 0, kStageFailure = 1, kUsage = 2 };

/// Runs one subcommand. `args` excludes the program name. Reports go to `out`;
/// usage text and error JSON ({stage, message, path?}) go to `err`.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spatialprobe::cli
