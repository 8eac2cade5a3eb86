#pragma once

#include <filesystem>
#include <string>

#include "cdet/model/change_model.hpp"

namespace cdet {

inline constexpr int kCheckpointVersion = 1;

// A checkpoint is one safetensors archive holding every model parameter and
// buffer ("encoder.*", "decoder.*") with the experiment config JSON and the
// format version in the metadata block.
void save_checkpoint(const std::filesystem::path& path, ChangeModelImpl& model, const std::string& config_json);

/// Reads only the stored config; integrity-error for foreign or newer files.
std::string read_checkpoint_config(const std::filesystem::path& path);

/// Strict load into a model built from the stored config.
void load_checkpoint_weights(const std::filesystem::path& path, ChangeModelImpl& model);

}  // namespace cdet
