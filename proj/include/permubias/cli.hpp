#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace permubias {

// Stable exit-code contract for every subcommand.
inline constexpr int kExitOk = 0;       // command ran and wrote its outputs
inline constexpr int kExitRuntime = 1;  // scoring or training failed mid-run
inline constexpr int kExitConfig = 2;   // bad flags, files, or option values

// Runs one invocation in-process. args excludes the program name. Human
// readable progress goes to out, failures to err; files are written
// atomically under the --out directory. Returns an exit code from the
// contract above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace permubias
