#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rescap::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 input or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInput = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rescap::cli
