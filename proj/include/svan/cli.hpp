#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace svan::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kConfig = 3,
    kIo = 4,
    kCorrupt = 5,
    kDimension = 6,
    kNumeric = 7,
    kUnsupported = 8,
};

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace svan::cli
