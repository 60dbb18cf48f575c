#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dsmpc {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInfeasible = 2;

/// Subcommands plan, mc, audit-approx and crosscheck. args excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsmpc
