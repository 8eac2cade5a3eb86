#pragma once

#include <utility>

#include "cdet/backbone/encoder.hpp"
#include "cdet/data/types.hpp"
#include "cdet/model/pyramid.hpp"
#include "cdet/model/upernet.hpp"

namespace cdet {

/// Batched prediction: prob and mask are N x H x W.
struct Prediction {
  torch::Tensor prob;
  torch::Tensor mask;  // uint8, prob > threshold
};

/// Siamese encoder, subtraction fusion, UPerNet decoder, sigmoid and
/// threshold. One encoder instance processes both images.
class ChangeModelImpl : public torch::nn::Module {
 public:
  ChangeModelImpl(Encoder encoder, const DecoderConfig& decoder, double threshold = 0.5);

  /// Inputs are normalized N x 3 x H x W batches; shape-error unless H and W
  /// are multiples of the encoder's size divisor.
  std::pair<FeaturePyramid, FeaturePyramid> encode_pair(const torch::Tensor& pre, const torch::Tensor& post);
  /// Change logits at input resolution, N x H x W.
  torch::Tensor decode_logits(const FeaturePyramid& fused, int64_t height, int64_t width);
  torch::Tensor decode(const FeaturePyramid& fused, int64_t height, int64_t width);

  torch::Tensor forward_logits(const torch::Tensor& pre, const torch::Tensor& post);
  Prediction forward(const torch::Tensor& pre, const torch::Tensor& post);
  /// Single preprocessed pair, no gradient.
  Prediction predict(const ImagePair& pair);

  Encoder encoder() const { return encoder_; }
  UPerNet decoder() const { return decoder_; }
  double threshold() const { return threshold_; }

 private:
  void check_input(const torch::Tensor& x) const;

  Encoder encoder_;
  UPerNet decoder_{nullptr};
  double threshold_;
};

TORCH_MODULE(ChangeModel);

torch::Tensor binarize(const torch::Tensor& prob, double threshold);

}  // namespace cdet
