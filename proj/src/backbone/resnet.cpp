#include "cdet/backbone/resnet.hpp"

#include "cdet/error.hpp"
#include "cdet/nn/flops.hpp"

namespace cdet {

namespace F = torch::nn::functional;

ResNetArch resnet_arch(int depth) {
  ResNetArch a;
  switch (depth) {
    case 18:
      return a;
    case 34:
      a.depths = {3, 4, 6, 3};
      return a;
    case 50:
      a.bottleneck = true;
      a.depths = {3, 4, 6, 3};
      a.widths = {256, 512, 1024, 2048};
      return a;
    case 101:
      a.bottleneck = true;
      a.depths = {3, 4, 23, 3};
      a.widths = {256, 512, 1024, 2048};
      return a;
  }
  fail(Errc::invalid_spec, "unsupported ResNet depth " + std::to_string(depth));
}

namespace {

// convolution + normalization (+ ReLU), named like HF ResNetConvLayer.
class ConvLayerImpl : public torch::nn::Module {
 public:
  ConvLayerImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool relu) : relu_(relu) {
    conv_ = register_module("convolution", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                                                 .stride(stride)
                                                                 .padding(kernel / 2)
                                                                 .bias(false)));
    torch::nn::init::kaiming_normal_(conv_->weight, 0.0, torch::kFanOut, torch::kReLU);
    norm_ = register_module("normalization", torch::nn::BatchNorm2d(out));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = norm_->forward(nn::conv(conv_, x));
    return relu_ ? torch::relu(y) : y;
  }

 private:
  bool relu_;
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d norm_{nullptr};
};

class ResidualImpl : public torch::nn::Module {
 public:
  ResidualImpl(int64_t in, int64_t out, int64_t stride, bool bottleneck) {
    if (in != out || stride != 1)
      shortcut_ = register_module("shortcut", std::make_shared<ConvLayerImpl>(in, out, 1, stride, false));
    auto layer = register_module("layer", torch::nn::ModuleList());
    auto add = [&](int64_t a, int64_t b, int64_t k, int64_t s, bool relu) {
      auto m = std::make_shared<ConvLayerImpl>(a, b, k, s, relu);
      layer->push_back(m);
      convs_.push_back(m);
    };
    if (bottleneck) {
      const auto mid = out / 4;
      add(in, mid, 1, 1, true);
      add(mid, mid, 3, stride, true);
      add(mid, out, 1, 1, false);
    } else {
      add(in, out, 3, stride, true);
      add(out, out, 3, 1, false);
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = x;
    for (auto& c : convs_) h = c->forward(h);
    return torch::relu(h + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  std::shared_ptr<ConvLayerImpl> shortcut_;
  std::vector<std::shared_ptr<ConvLayerImpl>> convs_;
};

struct Node : torch::nn::Module {};

}  // namespace

ResNetEncoderImpl::ResNetEncoderImpl(const ResNetArch& arch) : arch_(arch) {
  auto embedder = register_module("embedder", std::make_shared<Node>());
  stem_ = embedder->register_module("embedder", std::make_shared<ConvLayerImpl>(3, arch.stem, 7, 2, true));
  auto encoder = register_module("encoder", std::make_shared<Node>());
  auto stages = encoder->register_module("stages", torch::nn::ModuleList());
  int64_t in = arch.stem;
  for (int s = 0; s < 4; ++s) {
    auto stage = std::make_shared<Node>();
    auto layers = stage->register_module("layers", torch::nn::ModuleList());
    std::vector<std::shared_ptr<torch::nn::Module>> blocks;
    for (int64_t l = 0; l < arch.depths[s]; ++l) {
      const int64_t stride = (s > 0 && l == 0) ? 2 : 1;
      auto block = std::make_shared<ResidualImpl>(l == 0 ? in : arch.widths[s], arch.widths[s], stride, arch.bottleneck);
      layers->push_back(block);
      blocks.push_back(block);
    }
    stages->push_back(stage);
    stages_.push_back(std::move(blocks));
    in = arch.widths[s];
  }
}

std::vector<int64_t> ResNetEncoderImpl::channels() const {
  return {arch_.widths.begin(), arch_.widths.end()};
}

std::vector<torch::Tensor> ResNetEncoderImpl::forward(const torch::Tensor& images) {
  auto x = std::static_pointer_cast<ConvLayerImpl>(stem_)->forward(images);
  x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  std::vector<torch::Tensor> outs;
  for (auto& blocks : stages_) {
    for (auto& b : blocks) x = std::static_pointer_cast<ResidualImpl>(b)->forward(x);
    outs.push_back(x);
  }
  return outs;
}

}  // namespace cdet
