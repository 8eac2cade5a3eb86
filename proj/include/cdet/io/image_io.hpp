#pragma once

#include <filesystem>

#include <torch/torch.h>

#include "cdet/data/types.hpp"

namespace cdet::io {

/// Decodes an 8-bit image into float32 3xHxW in [0,1] (RGB order).
torch::Tensor read_rgb(const std::filesystem::path& path);

/// Decodes an 8-bit single-channel label; pixels > 127 become 1.
ChangeMask read_label(const std::filesystem::path& path);

/// Writes an HxWx3 uint8 RGB tensor.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& hwc_u8);

/// Writes a float 3xHxW image in [0,1] as 8-bit RGB.
void write_rgb_float(const std::filesystem::path& path, const torch::Tensor& chw);

/// Writes a mask as 0/255 single channel.
void write_label(const std::filesystem::path& path, const ChangeMask& mask);

}  // namespace cdet::io
