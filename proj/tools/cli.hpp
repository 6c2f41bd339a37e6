#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ponzi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand. `args` excludes the program name; "-" as an input
/// path reads `in`. Returns the process exit status.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ponzi::cli
