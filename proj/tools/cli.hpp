#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace kanlab::cli {

enum ExitCode : int { kOk = 0, kInvalidConfig = 2, kNumericalFailure = 3 };

/// Defaults for a subcommand's config; "net" and "full" pick the preset.
nlohmann::ordered_json default_config(const std::string& subcommand, const std::string& net, bool full);

/// Overlay `patch` on `base`. Unknown keys or type changes throw std::invalid_argument.
void merge_config(nlohmann::ordered_json& base, const nlohmann::json& patch);

/// Compact, key-sorted text; the form hashed into run directory names.
std::string canonical(const nlohmann::json& config);

/// Runs the tool. Results go to `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kanlab::cli
