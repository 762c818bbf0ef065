#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/nn.hpp"

namespace sgg::nn {

// Checkpoint = manifest JSON (parameter names, shapes, byte offsets, config
// echo) plus one sibling binary blob of row-major little-endian 32-bit
// floats. The manifest path is the checkpoint's identity; the blob sits next
// to it with a ".bin" suffix.
void save_checkpoint(const std::string& manifest_path, const std::vector<Parameter*>& params,
                     const nlohmann::json& config_echo);

// Loads values into params, which must agree with the manifest in names,
// order, and shapes. Returns the config echo. Validates blob length.
nlohmann::json load_checkpoint(const std::string& manifest_path,
                               const std::vector<Parameter*>& params);

// Reads just the config echo without needing a parameter set.
nlohmann::json peek_checkpoint_config(const std::string& manifest_path);

}  // namespace sgg::nn
