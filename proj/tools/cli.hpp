#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moe::cli {

/// Exit codes: 0 success, 2 usage / validation / I/O, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moe::cli
