#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crnn::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInputError = 2, kConfigError = 3 };

/// Runs one command line (args excludes the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crnn::cli
