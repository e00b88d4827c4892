#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace qafuse::cli {

/// Parse `args` (without the program name) and run the subcommand. Returns
/// the process exit code: 0 ok, 1 usage or config error, 2 bad input data,
/// 3 internal invariant failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_build_ref(const RunConfig& cfg, std::ostream& log);
void cmd_fuse(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_eval(const RunConfig& cfg, std::ostream& log);
void cmd_compare(const RunConfig& cfg, std::ostream& log);

}  // namespace qafuse::cli
