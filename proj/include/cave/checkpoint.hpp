#pragma once

#include <filesystem>
#include <string>

#include "cave/model.hpp"

namespace cave {

inline constexpr const char* kCheckpointVersion = "cave-ckpt-1";

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);

// One JSON document: version, kind, config, weibull, vocabulary and every
// tensor as nested row arrays.
std::string checkpoint_to_json(const Model& model);
Model checkpoint_from_json(const std::string& text);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace cave
