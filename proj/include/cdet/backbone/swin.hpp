#pragma once

#include <array>

#include "cdet/backbone/encoder.hpp"

namespace cdet {

struct SwinArch {
  int version = 1;  // 1: Swin, 2: SwinV2 (cosine attention, post-norm, log-spaced CPB)
  int64_t embed_dim = 96;
  std::array<int64_t, 4> depths{2, 2, 6, 2};
  std::array<int64_t, 4> heads{3, 6, 12, 24};
  int64_t window = 7;
  int64_t pretrained_window = 0;  // SwinV2 only
  double mlp_ratio = 4.0;
  double drop_path_rate = 0.1;
};

/// Hierarchical shifted-window transformer. Module names follow the
/// HuggingFace Swin/SwinV2 layout so checkpoints map without renaming.
/// Feature maps are padded to window multiples inside each block.
class SwinEncoderImpl : public EncoderImpl {
 public:
  explicit SwinEncoderImpl(const SwinArch& arch);

  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;
  std::vector<int64_t> channels() const override;
  std::string probe_parameter() const override { return "embeddings.patch_embeddings.projection.weight"; }
  bool optional_in_checkpoint(const std::string& name) const override;

  const SwinArch& arch() const { return arch_; }

 private:
  SwinArch arch_;
  torch::nn::Conv2d projection_{nullptr};
  torch::nn::LayerNorm embed_norm_{nullptr};
  std::vector<std::shared_ptr<torch::nn::Module>> stages_;
  std::vector<torch::nn::LayerNorm> out_norms_;
};

}  // namespace cdet
