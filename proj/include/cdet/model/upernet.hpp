#pragma once

#include <vector>

#include <torch/torch.h>

#include "cdet/model/pyramid.hpp"

namespace cdet {

struct DecoderConfig {
  int64_t channels = 512;
  std::vector<int64_t> pool_scales{1, 2, 3, 6};
  double dropout = 0.1;
};

/// Pyramid pooling on the coarsest level, top-down lateral merging, fused
/// 3x3 bottleneck, 1x1 classifier to a single change logit at stride 4.
/// Convolutions feeding BatchNorm carry no bias.
class UPerNetImpl : public torch::nn::Module {
 public:
  UPerNetImpl(std::vector<int64_t> in_channels, const DecoderConfig& config);

  /// Change logits at the stride-4 resolution, N x 1 x H/4 x W/4.
  torch::Tensor forward(const FeaturePyramid& fused);

  const std::vector<int64_t>& in_channels() const { return in_channels_; }
  const DecoderConfig& config() const { return config_; }

 private:
  std::vector<int64_t> in_channels_;
  DecoderConfig config_;
  std::vector<std::shared_ptr<torch::nn::Module>> psp_, lateral_, fpn_;
  std::shared_ptr<torch::nn::Module> bottleneck_, fpn_bottleneck_;
  torch::nn::Dropout2d dropout_{nullptr};
  torch::nn::Conv2d classifier_{nullptr};
};

TORCH_MODULE(UPerNet);

}  // namespace cdet
