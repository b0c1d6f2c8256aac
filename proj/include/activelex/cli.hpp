#pragma once

#include <iosfwd>

namespace activelex {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for `activelex <simulate|sweep|validate|serve> ...`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace activelex
