#pragma once

#include <string>
#include <vector>

namespace mcg {

/// Command-line entry point. Subcommands: pretrain, finetune, answer,
/// evaluate, gen-synthetic, inspect-checkpoint. Returns 0 on success,
/// 1 on usage errors, 2 on runtime failures. The MCG_CONFIG environment
/// variable supplies a default --config path.
int run_command(const std::vector<std::string>& args);

}  // namespace mcg
