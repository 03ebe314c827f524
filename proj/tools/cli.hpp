#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qens::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kDataError = 3,
    kNumericDivergence = 4,
};

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace qens::cli
