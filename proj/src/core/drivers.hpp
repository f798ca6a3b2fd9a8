#pragma once

#include <string>

#include "config.hpp"

namespace ndr {

// Command drivers behind the CLI and the C API. Each takes the resolved
// configuration as JSON text, writes the declared artifacts (plus manifests),
// and returns a JSON summary.
struct CommandResult {
  std::string summary_json;
};

CommandResult cmd_simulate(const std::string& config_json, const std::string& out_dir = "");
CommandResult cmd_train(const std::string& config_json, const std::string& out_dir = "");
// check=true additionally enforces the benchmark orderings and fails with
// Err::CheckFailed when they do not hold.
CommandResult cmd_eval(const std::string& config_json, bool check, const std::string& out_dir = "");
CommandResult cmd_ablate(const std::string& config_json, const std::string& out_dir = "");
CommandResult cmd_transfer(const std::string& config_json, const std::string& out_dir = "");
CommandResult cmd_profile(const std::string& config_json, const std::string& out_dir = "");

CommandResult run_command(const std::string& name, const std::string& config_json, bool check,
                          const std::string& out_dir = "");

}  // namespace ndr
