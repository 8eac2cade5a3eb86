#include "cdet/model/change_model.hpp"

#include "cdet/error.hpp"

namespace cdet {

namespace F = torch::nn::functional;

torch::Tensor binarize(const torch::Tensor& prob, double threshold) {
  return prob.gt(threshold).to(torch::kUInt8);
}

ChangeModelImpl::ChangeModelImpl(Encoder encoder, const DecoderConfig& decoder, double threshold)
    : encoder_(std::move(encoder)), threshold_(threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) fail(Errc::config_error, "threshold must lie in (0,1)");
  register_module("encoder", encoder_);
  decoder_ = register_module("decoder", UPerNet(encoder_->channels(), decoder));
}

void ChangeModelImpl::check_input(const torch::Tensor& x) const {
  const auto d = encoder_->size_divisor();
  if (x.dim() != 4 || x.size(1) != 3)
    fail(Errc::shape_error, "expected N x 3 x H x W input, got " + c10::str(x.sizes()));
  if (x.size(2) % d != 0 || x.size(3) % d != 0)
    fail(Errc::shape_error, "input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                                " is not a multiple of " + std::to_string(d));
}

std::pair<FeaturePyramid, FeaturePyramid> ChangeModelImpl::encode_pair(const torch::Tensor& pre,
                                                                       const torch::Tensor& post) {
  check_input(pre);
  check_input(post);
  if (pre.sizes() != post.sizes()) fail(Errc::shape_error, "pre and post batches differ in shape");
  FeaturePyramid f1, f2;
  f1.levels = encoder_->forward(pre);
  f2.levels = encoder_->forward(post);
  f1.check(pre.size(2), pre.size(3));
  f2.check(post.size(2), post.size(3));
  return {std::move(f1), std::move(f2)};
}

torch::Tensor ChangeModelImpl::decode_logits(const FeaturePyramid& fused, int64_t height, int64_t width) {
  auto logits = decoder_->forward(fused);
  logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{height, width})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  return logits.squeeze(1);
}

torch::Tensor ChangeModelImpl::decode(const FeaturePyramid& fused, int64_t height, int64_t width) {
  return torch::sigmoid(decode_logits(fused, height, width));
}

torch::Tensor ChangeModelImpl::forward_logits(const torch::Tensor& pre, const torch::Tensor& post) {
  auto [f1, f2] = encode_pair(pre, post);
  return decode_logits(fuse_subtract(f1, f2), pre.size(2), pre.size(3));
}

Prediction ChangeModelImpl::forward(const torch::Tensor& pre, const torch::Tensor& post) {
  Prediction p;
  p.prob = torch::sigmoid(forward_logits(pre, post));
  p.mask = binarize(p.prob, threshold_);
  return p;
}

Prediction ChangeModelImpl::predict(const ImagePair& pair) {
  pair.check();
  torch::NoGradGuard guard;
  const auto device = decoder_->parameters().front().device();
  const auto dtype = decoder_->parameters().front().dtype();
  auto p = forward(pair.pre.unsqueeze(0).to(device, dtype), pair.post.unsqueeze(0).to(device, dtype));
  return {p.prob.squeeze(0).to(torch::kCPU, torch::kFloat32), p.mask.squeeze(0).cpu()};
}

}  // namespace cdet
