#include "cdet/model/upernet.hpp"

#include "cdet/error.hpp"
#include "cdet/nn/flops.hpp"

namespace cdet {

namespace F = torch::nn::functional;

namespace {

class ConvBnReluImpl : public torch::nn::Module {
 public:
  ConvBnReluImpl(int64_t in, int64_t out, int64_t kernel) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                                          .padding(kernel / 2)
                                                          .bias(false)));
    torch::nn::init::kaiming_normal_(conv_->weight, 0.0, torch::kFanOut, torch::kReLU);
    bn_ = register_module("bn", torch::nn::BatchNorm2d(out));
  }

  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(bn_->forward(nn::conv(conv_, x))); }

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};

std::shared_ptr<ConvBnReluImpl> as_cbr(const std::shared_ptr<torch::nn::Module>& m) {
  return std::static_pointer_cast<ConvBnReluImpl>(m);
}

torch::Tensor resize(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

UPerNetImpl::UPerNetImpl(std::vector<int64_t> in_channels, const DecoderConfig& config)
    : in_channels_(std::move(in_channels)), config_(config) {
  if (in_channels_.size() != 4) fail(Errc::config_error, "decoder expects four input levels");
  if (config.channels < 1 || config.pool_scales.empty())
    fail(Errc::config_error, "decoder channels and pool scales must be positive");
  const auto ch = config.channels;
  const auto top = in_channels_.back();

  auto psp = register_module("psp", torch::nn::ModuleList());
  for (size_t i = 0; i < config.pool_scales.size(); ++i) {
    auto m = std::make_shared<ConvBnReluImpl>(top, ch, 1);
    psp->push_back(m);
    psp_.push_back(m);
  }
  bottleneck_ = register_module("bottleneck",
      std::make_shared<ConvBnReluImpl>(top + static_cast<int64_t>(config.pool_scales.size()) * ch, ch, 3));
  auto lateral = register_module("lateral", torch::nn::ModuleList());
  auto fpn = register_module("fpn", torch::nn::ModuleList());
  for (size_t i = 0; i + 1 < in_channels_.size(); ++i) {
    auto l = std::make_shared<ConvBnReluImpl>(in_channels_[i], ch, 1);
    auto f = std::make_shared<ConvBnReluImpl>(ch, ch, 3);
    lateral->push_back(l);
    fpn->push_back(f);
    lateral_.push_back(l);
    fpn_.push_back(f);
  }
  fpn_bottleneck_ = register_module("fpn_bottleneck",
      std::make_shared<ConvBnReluImpl>(static_cast<int64_t>(in_channels_.size()) * ch, ch, 3));
  dropout_ = register_module("dropout", torch::nn::Dropout2d(config.dropout));
  classifier_ = register_module("classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, 1, 1)));
  torch::NoGradGuard guard;
  classifier_->weight.normal_(0.0, 0.01);
  classifier_->bias.zero_();
}

torch::Tensor UPerNetImpl::forward(const FeaturePyramid& fused) {
  if (fused.size() != in_channels_.size())
    fail(Errc::config_error, "decoder received " + std::to_string(fused.size()) + " levels");
  for (size_t i = 0; i < fused.size(); ++i)
    if (fused.levels[i].dim() != 4 || fused.levels[i].size(1) != in_channels_[i])
      fail(Errc::config_error, "level " + std::to_string(i) + " has " + std::to_string(fused.levels[i].size(1)) +
                                   " channels, decoder expects " + std::to_string(in_channels_[i]));

  const auto& top = fused.levels.back();
  std::vector<torch::Tensor> pooled{top};
  for (size_t i = 0; i < psp_.size(); ++i) {
    const auto s = config_.pool_scales[i];
    auto p = F::adaptive_avg_pool2d(top, F::AdaptiveAvgPool2dFuncOptions({s, s}));
    pooled.push_back(resize(as_cbr(psp_[i])->forward(p), top.size(2), top.size(3)));
  }

  std::vector<torch::Tensor> lat;
  for (size_t i = 0; i < lateral_.size(); ++i) lat.push_back(as_cbr(lateral_[i])->forward(fused.levels[i]));
  lat.push_back(as_cbr(bottleneck_)->forward(torch::cat(pooled, 1)));

  for (size_t i = lat.size() - 1; i > 0; --i)
    lat[i - 1] = lat[i - 1] + resize(lat[i], lat[i - 1].size(2), lat[i - 1].size(3));

  const auto h = lat[0].size(2), w = lat[0].size(3);
  std::vector<torch::Tensor> outs;
  for (size_t i = 0; i < fpn_.size(); ++i) outs.push_back(resize(as_cbr(fpn_[i])->forward(lat[i]), h, w));
  outs.push_back(resize(lat.back(), h, w));

  auto x = as_cbr(fpn_bottleneck_)->forward(torch::cat(outs, 1));
  return nn::conv(classifier_, dropout_->forward(x));
}

}  // namespace cdet
