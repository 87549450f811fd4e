#include "json_io.hpp"

#include <algorithm>

namespace mfd::detail {

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& context) {
  if (!obj.is_object()) {
    throw ConfigError(context + ": expected a JSON object");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError(context + ": unknown key \"" + it.key() + "\"");
    }
  }
}

json vit_config_to_json(const VitConfig& cfg) {
  return json{{"image_h", cfg.image_h},
              {"image_w", cfg.image_w},
              {"channels", cfg.channels},
              {"patch_size", cfg.patch_size},
              {"embed_dim", cfg.embed_dim},
              {"num_heads", cfg.num_heads},
              {"num_layers", cfg.num_layers},
              {"num_classes", cfg.num_classes},
              {"use_class_token", cfg.use_class_token},
              {"seed", cfg.seed}};
}

VitConfig vit_config_from_json(const json& j, const std::string& context) {
  reject_unknown_keys(j,
                      {"image_h", "image_w", "channels", "patch_size", "embed_dim",
                       "num_heads", "num_layers", "num_classes", "use_class_token",
                       "seed"},
                      context);
  VitConfig cfg;
  try {
    cfg.image_h = j.at("image_h").get<int64_t>();
    cfg.image_w = j.at("image_w").get<int64_t>();
    cfg.channels = j.at("channels").get<int64_t>();
    cfg.patch_size = j.at("patch_size").get<int64_t>();
    cfg.embed_dim = j.at("embed_dim").get<int64_t>();
    cfg.num_heads = j.at("num_heads").get<int64_t>();
    cfg.num_layers = j.at("num_layers").get<int64_t>();
    cfg.num_classes = j.at("num_classes").get<int64_t>();
    cfg.use_class_token = j.at("use_class_token").get<bool>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(context + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace mfd::detail
