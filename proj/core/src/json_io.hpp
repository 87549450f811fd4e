#pragma once

// Internal JSON helpers shared by checkpoint, config and metrics code.
// Not installed.

#include <string>
#include <vector>

#include <json.hpp>

#include "mfd/tensor.hpp"
#include "mfd/vit.hpp"

namespace mfd::detail {

using nlohmann::json;

// Rejects keys not in `allowed`; silent typos in config files are the
// main failure mode this guards.
void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& context);

json vit_config_to_json(const VitConfig& cfg);
VitConfig vit_config_from_json(const json& j, const std::string& context);

}  // namespace mfd::detail
