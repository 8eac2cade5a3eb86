#include "cdet/model/checkpoint.hpp"

#include "cdet/error.hpp"
#include "cdet/io/safetensors.hpp"

namespace cdet {

namespace {

constexpr const char* kFormat = "cdet-checkpoint";

io::TensorArchive open_checked(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::not_found, "checkpoint " + path.string() + " does not exist");
  auto archive = io::read_safetensors(path);
  const auto fmt = archive.metadata.find("format");
  const auto ver = archive.metadata.find("format_version");
  if (fmt == archive.metadata.end() || fmt->second != kFormat || ver == archive.metadata.end())
    fail(Errc::integrity_error, path.string() + " is not a change-model checkpoint");
  if (ver->second != std::to_string(kCheckpointVersion))
    fail(Errc::integrity_error, path.string() + " has unsupported format version " + ver->second);
  return archive;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, ChangeModelImpl& model, const std::string& config_json) {
  io::TensorArchive archive;
  for (const auto& p : model.named_parameters(true))
    archive.tensors[p.key()] = p.value().detach().to(torch::kCPU).contiguous();
  for (const auto& b : model.named_buffers(true))
    archive.tensors[b.key()] = b.value().detach().to(torch::kCPU).contiguous();
  archive.metadata["format"] = kFormat;
  archive.metadata["format_version"] = std::to_string(kCheckpointVersion);
  archive.metadata["config"] = config_json;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_safetensors(path, archive);
}

std::string read_checkpoint_config(const std::filesystem::path& path) {
  auto archive = open_checked(path);
  const auto it = archive.metadata.find("config");
  if (it == archive.metadata.end()) fail(Errc::integrity_error, path.string() + " carries no config");
  return it->second;
}

void load_checkpoint_weights(const std::filesystem::path& path, ChangeModelImpl& model) {
  auto archive = open_checked(path);
  torch::NoGradGuard guard;
  size_t used = 0;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    const auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) fail(Errc::integrity_error, path.string() + " lacks " + name);
    if (it->second.sizes() != dst.sizes()) fail(Errc::integrity_error, "shape mismatch for " + name);
    dst.copy_(it->second);
    ++used;
  };
  for (auto& p : model.named_parameters(true)) copy(p.key(), p.value());
  for (auto& b : model.named_buffers(true)) copy(b.key(), b.value());
  if (used != archive.tensors.size())
    fail(Errc::integrity_error, path.string() + " holds tensors the model does not define");
}

}  // namespace cdet
