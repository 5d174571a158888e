#pragma once

#include <iosfwd>

namespace carbonsched {

/// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `carbonsched` tool: simulate, sweep, fit, gen-trace,
/// validate and solve. Returns the exit status.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace carbonsched
