#pragma once

#include <array>

#include "cdet/backbone/encoder.hpp"

namespace cdet {

struct ResNetArch {
  bool bottleneck = false;
  std::array<int64_t, 4> depths{2, 2, 2, 2};
  std::array<int64_t, 4> widths{64, 128, 256, 512};  // stage output channels
  int64_t stem = 64;
};

ResNetArch resnet_arch(int depth);

/// ResNet with HuggingFace parameter names (embedder/encoder.stages). The
/// bottleneck variant strides in its 3x3 convolution.
class ResNetEncoderImpl : public EncoderImpl {
 public:
  explicit ResNetEncoderImpl(const ResNetArch& arch);

  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;
  std::vector<int64_t> channels() const override;
  std::string probe_parameter() const override { return "embedder.embedder.convolution.weight"; }

 private:
  ResNetArch arch_;
  std::shared_ptr<torch::nn::Module> stem_;
  std::vector<std::vector<std::shared_ptr<torch::nn::Module>>> stages_;
};

}  // namespace cdet
