#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace ngd {

/// Exit statuses of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `ngd` subcommand. `args` excludes the program name. Primary
/// output goes to `out` (or the --out file), diagnostics to `err`.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace ngd
