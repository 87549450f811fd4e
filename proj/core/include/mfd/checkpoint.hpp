#pragma once

#include <string>

#include "mfd/vit.hpp"

namespace mfd {

// Versioned binary container: magic, config as JSON, then named parameter
// tensors as raw little-endian doubles.

void save_checkpoint(const std::string& path, const VitModel& model);

// Rebuilds the model from the stored config.
VitModel load_checkpoint(const std::string& path);

// As above but fails loudly when the stored architecture differs from
// `expected` (seeds are allowed to differ).
VitModel load_checkpoint(const std::string& path, const VitConfig& expected);

}  // namespace mfd
