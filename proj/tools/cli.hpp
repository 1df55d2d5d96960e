#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfp::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kPipeline = 4 };

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err` as one line; reports and tables go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfp::cli
