#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace cdp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args[0] is the program name). Output goes to `out`,
/// diagnostics to `err`.
int execute(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cdp::cli
