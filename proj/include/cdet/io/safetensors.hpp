#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace cdet::io {

// Reader/writer for the safetensors container: an 8-byte little-endian
// header length, a JSON header, then a flat byte buffer.
struct TensorArchive {
  std::map<std::string, torch::Tensor> tensors;
  std::map<std::string, std::string> metadata;
};

TensorArchive read_safetensors(const std::filesystem::path& path);
void write_safetensors(const std::filesystem::path& path, const TensorArchive& archive);

}  // namespace cdet::io
