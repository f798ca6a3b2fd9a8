#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace ndr {

using nlohmann::json;

json parse_json(const std::string& text);
json load_json_file(const std::string& path);

// Rejects keys not present in the allowed map. Keys of nested objects are
// checked under "parent.child" paths; array elements under "parent[]".
void check_keys(const json& j, const std::map<std::string, std::set<std::string>>& allowed,
                const std::string& path = "");

// Applies "a.b.c=value" assignments; values parse as JSON when possible and
// fall back to strings.
void apply_override(json& j, const std::string& assignment);

// Built-in configuration presets: lorenz-train, rossler-eval, uav-bench.
json preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Joins the output directory (env NDRSHKF_OUT_DIR or override) with relative
// artifact paths; absolute paths pass through.
std::string resolve_out_path(const std::string& path, const std::string& out_dir);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Every artifact gets "<path>.manifest.json" embedding the command and the
// fully resolved config so the run can be reproduced byte for byte.
void write_manifest(const std::string& artifact_path, const std::string& command,
                    const json& resolved_config);

}  // namespace ndr
