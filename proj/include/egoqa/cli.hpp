#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace egoqa {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;  // some questions failed
inline constexpr int kExitInput = 2;    // configuration or input error

// Entry point of the egoqa tool; out/err receive normal output and
// diagnostics. Subcommands: ingest, answer, evaluate, synth, bench-latency.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace egoqa
