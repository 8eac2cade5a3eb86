#include "cdet/backbone/convnext.hpp"

#include "cdet/nn/flops.hpp"

namespace cdet {

namespace F = torch::nn::functional;

namespace {

struct Node : torch::nn::Module {};

// LayerNorm over the channel axis of an NCHW map.
class ChannelNormImpl : public torch::nn::Module {
 public:
  explicit ChannelNormImpl(int64_t channels) {
    weight = register_parameter("weight", torch::ones({channels}));
    bias = register_parameter("bias", torch::zeros({channels}));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = F::layer_norm(x.permute({0, 2, 3, 1}),
                           F::LayerNormFuncOptions({x.size(1)}).weight(weight).bias(bias).eps(1e-6));
    return y.permute({0, 3, 1, 2});
  }

  torch::Tensor weight, bias;
};

void init_weights(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.named_parameters(true)) {
    const auto& name = p.key();
    if (name.size() >= 6 && name.rfind("weight") == name.size() - 6 && p.value().dim() > 1)
      p.value().normal_(0.0, 0.02).clamp_(-0.04, 0.04);
  }
}

class ConvNextBlockImpl : public torch::nn::Module {
 public:
  ConvNextBlockImpl(int64_t dim, double scale_init, double drop_path) : drop_path_(drop_path) {
    dwconv_ = register_module("dwconv", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 7).padding(3).groups(dim)));
    norm_ = register_module("layernorm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
    pw1_ = register_module("pwconv1", torch::nn::Linear(dim, 4 * dim));
    pw2_ = register_module("pwconv2", torch::nn::Linear(4 * dim, dim));
    gamma_ = register_parameter("layer_scale_parameter", torch::full({dim}, scale_init));
    init_weights(*this);
    torch::NoGradGuard guard;
    dwconv_->bias.zero_();
    pw1_->bias.zero_();
    pw2_->bias.zero_();
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = nn::conv(dwconv_, x).permute({0, 2, 3, 1});
    h = nn::linear(pw2_, F::gelu(nn::linear(pw1_, norm_->forward(h))));
    h = (h * gamma_).permute({0, 3, 1, 2});
    return x + drop_path(h, drop_path_, is_training());
  }

 private:
  double drop_path_;
  torch::nn::Conv2d dwconv_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
  torch::nn::Linear pw1_{nullptr}, pw2_{nullptr};
  torch::Tensor gamma_;
};

}  // namespace

ConvNextEncoderImpl::ConvNextEncoderImpl(const ConvNextArch& arch) : arch_(arch) {
  auto embeddings = register_module("embeddings", std::make_shared<Node>());
  patchify_ = embeddings->register_module("patch_embeddings",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, arch.dims[0], 4).stride(4)));
  stem_norm_ = embeddings->register_module("layernorm", std::make_shared<ChannelNormImpl>(arch.dims[0]));

  const int64_t total = arch.depths[0] + arch.depths[1] + arch.depths[2] + arch.depths[3];
  int64_t index = 0;
  auto encoder = register_module("encoder", std::make_shared<Node>());
  auto stages = encoder->register_module("stages", torch::nn::ModuleList());
  for (int s = 0; s < 4; ++s) {
    auto stage = std::make_shared<Node>();
    if (s > 0) {
      auto down = stage->register_module("downsampling_layer", torch::nn::ModuleList());
      auto norm = std::make_shared<ChannelNormImpl>(arch.dims[s - 1]);
      auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(arch.dims[s - 1], arch.dims[s], 2).stride(2));
      down->push_back(norm);
      down->push_back(conv);
      downsample_norms_.push_back(norm);
      downsample_convs_.push_back(conv);
    }
    auto layers = stage->register_module("layers", torch::nn::ModuleList());
    std::vector<std::shared_ptr<torch::nn::Module>> blocks;
    for (int64_t l = 0; l < arch.depths[s]; ++l, ++index) {
      const double rate = total > 1 ? arch.drop_path_rate * index / (total - 1) : 0.0;
      auto block = std::make_shared<ConvNextBlockImpl>(arch.dims[s], arch.layer_scale_init, rate);
      layers->push_back(block);
      blocks.push_back(block);
    }
    stages->push_back(stage);
    blocks_.push_back(std::move(blocks));
  }
  auto norms = register_module("hidden_states_norms", std::make_shared<Node>());
  for (int s = 0; s < 4; ++s)
    out_norms_.push_back(norms->register_module("stage" + std::to_string(s + 1),
                                                std::make_shared<ChannelNormImpl>(arch.dims[s])));
  init_weights(*this);
}

std::vector<int64_t> ConvNextEncoderImpl::channels() const {
  return {arch_.dims.begin(), arch_.dims.end()};
}

bool ConvNextEncoderImpl::optional_in_checkpoint(const std::string& name) const {
  return name.rfind("hidden_states_norms.", 0) == 0;
}

std::vector<torch::Tensor> ConvNextEncoderImpl::forward(const torch::Tensor& images) {
  auto x = std::static_pointer_cast<ChannelNormImpl>(stem_norm_)->forward(nn::conv(patchify_, images));
  std::vector<torch::Tensor> outs;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      x = std::static_pointer_cast<ChannelNormImpl>(downsample_norms_[s - 1])->forward(x);
      x = nn::conv(downsample_convs_[s - 1], x);
    }
    for (auto& b : blocks_[s]) x = std::static_pointer_cast<ConvNextBlockImpl>(b)->forward(x);
    outs.push_back(std::static_pointer_cast<ChannelNormImpl>(out_norms_[s])->forward(x));
  }
  return outs;
}

}  // namespace cdet
