#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hagan::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kBadArgs = 2,
  kDataError = 3,
  kNumerical = 4,
};

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hagan::cli
