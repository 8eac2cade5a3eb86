#pragma once

#include <array>

#include "cdet/backbone/encoder.hpp"

namespace cdet {

struct ConvNextArch {
  std::array<int64_t, 4> depths{3, 3, 27, 3};
  std::array<int64_t, 4> dims{128, 256, 512, 1024};
  double layer_scale_init = 1e-6;
  double drop_path_rate = 0.0;
};

/// ConvNeXt with HuggingFace parameter names. Per-stage output norms are
/// added for dense prediction and are absent from classifier checkpoints.
class ConvNextEncoderImpl : public EncoderImpl {
 public:
  explicit ConvNextEncoderImpl(const ConvNextArch& arch);

  std::vector<torch::Tensor> forward(const torch::Tensor& images) override;
  std::vector<int64_t> channels() const override;
  std::string probe_parameter() const override { return "embeddings.patch_embeddings.weight"; }
  bool optional_in_checkpoint(const std::string& name) const override;

 private:
  ConvNextArch arch_;
  torch::nn::Conv2d patchify_{nullptr};
  std::shared_ptr<torch::nn::Module> stem_norm_;
  std::vector<std::shared_ptr<torch::nn::Module>> downsample_norms_;
  std::vector<torch::nn::Conv2d> downsample_convs_;
  std::vector<std::vector<std::shared_ptr<torch::nn::Module>>> blocks_;
  std::vector<std::shared_ptr<torch::nn::Module>> out_norms_;
};

}  // namespace cdet
