#include "cdet/backbone/vit.hpp"

#include "cdet/error.hpp"
#include "cdet/nn/flops.hpp"

namespace cdet {

namespace F = torch::nn::functional;

namespace {

struct Node : torch::nn::Module {};

torch::nn::Linear make_linear(torch::nn::Module& parent, const std::string& name, int64_t in, int64_t out) {
  auto layer = parent.register_module(name, torch::nn::Linear(in, out));
  torch::NoGradGuard guard;
  layer->weight.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
  layer->bias.zero_();
  return layer;
}

torch::nn::LayerNorm make_norm(torch::nn::Module& parent, const std::string& name, int64_t dim) {
  return parent.register_module(name, torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
}

class VitBlockImpl : public torch::nn::Module {
 public:
  VitBlockImpl(int64_t dim, int64_t heads, double mlp_ratio, double drop_path)
      : heads_(heads), drop_path_(drop_path) {
    norm1_ = make_norm(*this, "norm1", dim);
    auto attn = register_module("attn", std::make_shared<Node>());
    qkv_ = make_linear(*attn, "qkv", dim, 3 * dim);
    proj_ = make_linear(*attn, "proj", dim, dim);
    norm2_ = make_norm(*this, "norm2", dim);
    auto mlp = register_module("mlp", std::make_shared<Node>());
    const auto hidden = static_cast<int64_t>(dim * mlp_ratio);
    fc1_ = make_linear(*mlp, "fc1", dim, hidden);
    fc2_ = make_linear(*mlp, "fc2", hidden, dim);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    const auto B = x.size(0), N = x.size(1), C = x.size(2);
    const auto hd = C / heads_;
    auto qkv = nn::linear(qkv_, norm1_->forward(x)).view({B, N, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
    auto q = qkv[0] * std::pow(static_cast<double>(hd), -0.5);
    auto attn = torch::softmax(nn::matmul(q, qkv[1].transpose(-2, -1)), -1);
    auto h = nn::matmul(attn, qkv[2]).transpose(1, 2).reshape({B, N, C});
    auto y = x + drop_path(nn::linear(proj_, h), drop_path_, is_training());
    auto m = nn::linear(fc2_, F::gelu(nn::linear(fc1_, norm2_->forward(y))));
    return y + drop_path(m, drop_path_, is_training());
  }

 private:
  int64_t heads_;
  double drop_path_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};

}  // namespace

VitEncoderImpl::VitEncoderImpl(const VitArch& arch) : arch_(arch) {
  if (arch.embed_dim % arch.heads != 0) fail(Errc::invalid_spec, "ViT head count must divide width");
  for (auto t : arch.taps)
    if (t < 0 || t >= arch.depth) fail(Errc::invalid_spec, "ViT tap index outside the block range");

  auto patch = register_module("patch_embed", std::make_shared<Node>());
  proj_ = patch->register_module("proj",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, arch.embed_dim, arch.patch).stride(arch.patch)));
  const auto g = arch.pretrain_grid;
  cls_token_ = register_parameter("cls_token", torch::zeros({1, 1, arch.embed_dim}));
  pos_embed_ = register_parameter("pos_embed", torch::zeros({1, 1 + g * g, arch.embed_dim}));
  {
    torch::NoGradGuard guard;
    cls_token_.normal_(0.0, 1e-6);
    pos_embed_.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
  }
  auto blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < arch.depth; ++i) {
    const double rate = arch.depth > 1 ? arch.drop_path_rate * i / (arch.depth - 1) : 0.0;
    auto block = std::make_shared<VitBlockImpl>(arch.embed_dim, arch.heads, arch.mlp_ratio, rate);
    blocks->push_back(block);
    blocks_.push_back(block);
  }
}

std::vector<int64_t> VitEncoderImpl::channels() const {
  return std::vector<int64_t>(4, arch_.embed_dim);
}

std::vector<torch::Tensor> VitEncoderImpl::forward(const torch::Tensor& images) {
  if (images.size(2) % arch_.patch != 0 || images.size(3) % arch_.patch != 0)
    fail(Errc::shape_error, "ViT input must be a multiple of the patch size");
  auto x = nn::conv(proj_, images);
  const auto B = x.size(0), C = x.size(1), gh = x.size(2), gw = x.size(3);
  x = x.flatten(2).transpose(1, 2);

  const auto g = arch_.pretrain_grid;
  auto pos_cls = pos_embed_.narrow(1, 0, 1);
  auto pos_grid = pos_embed_.narrow(1, 1, g * g);
  if (gh != g || gw != g) {
    auto grid = pos_grid.reshape({1, g, g, C}).permute({0, 3, 1, 2});
    grid = F::interpolate(grid, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{gh, gw})
                                    .mode(torch::kBicubic)
                                    .align_corners(false));
    pos_grid = grid.permute({0, 2, 3, 1}).reshape({1, gh * gw, C});
  }
  x = torch::cat({cls_token_.expand({B, 1, C}) + pos_cls, x + pos_grid}, 1);

  std::vector<torch::Tensor> taps;
  size_t next = 0;
  for (int64_t i = 0; i < arch_.depth && next < 4; ++i) {
    x = std::static_pointer_cast<VitBlockImpl>(blocks_[i])->forward(x);
    if (i == arch_.taps[next]) {
      taps.push_back(x.narrow(1, 1, gh * gw).transpose(1, 2).reshape({B, C, gh, gw}));
      ++next;
    }
  }
  auto up = [](const torch::Tensor& t, double factor) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{factor, factor})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  };
  return {up(taps[0], 4.0), up(taps[1], 2.0), taps[2], F::max_pool2d(taps[3], F::MaxPool2dFuncOptions(2))};
}

}  // namespace cdet
