#pragma once

#include <array>

#include "cdet/backbone/encoder.hpp"

namespace cdet {

struct VitArch {
  int64_t embed_dim = 192;
  int64_t depth = 12;
  int64_t heads = 3;
  int64_t patch = 16;
  int64_t pretrain_grid = 14;  // position table size of the 224px checkpoints
  double mlp_ratio = 4.0;
  double drop_path_rate = 0.0;
  std::array<int64_t, 4> taps{2, 5, 8, 11};
};

/// Plain ViT with timm parameter names. Four evenly spaced blocks are tapped
/// at stride 16 and resampled to strides 4/8/16/32 (bilinear x4, x2,
/// identity, 2x2 max-pool), so the pyramid adds no parameters.
class VitEncoderImpl : public EncoderImpl {
 public:
  explicit VitEncoderImpl(const VitArch& arch);

  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;
  std::vector<int64_t> channels() const override;
  std::string probe_parameter() const override { return "patch_embed.proj.weight"; }

  const VitArch& arch() const { return arch_; }

 private:
  VitArch arch_;
  torch::nn::Conv2d proj_{nullptr};
  torch::Tensor cls_token_, pos_embed_;
  std::vector<std::shared_ptr<torch::nn::Module>> blocks_;
};

}  // namespace cdet
