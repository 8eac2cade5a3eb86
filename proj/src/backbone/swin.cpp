#include "cdet/backbone/swin.hpp"

#include <cmath>

#include "cdet/error.hpp"
#include "cdet/nn/flops.hpp"

namespace cdet {

namespace F = torch::nn::functional;

torch::Tensor drop_path(const torch::Tensor& x, double rate, bool training) {
  if (!training || rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<int64_t> shape(x.dim(), 1);
  shape[0] = x.size(0);
  auto mask = torch::empty(shape, x.options()).bernoulli_(keep);
  return x * mask / keep;
}

namespace {

// Named container so parameters get dotted HuggingFace-style paths.
struct Node : torch::nn::Module {};

void trunc_normal_(torch::Tensor t, double std) {
  torch::NoGradGuard guard;
  t.normal_(0.0, std).clamp_(-2.0 * std, 2.0 * std);
}

torch::nn::Linear make_linear(torch::nn::Module& parent, const std::string& name, int64_t in, int64_t out,
                              bool bias = true) {
  auto layer = parent.register_module(name, torch::nn::Linear(torch::nn::LinearOptions(in, out).bias(bias)));
  trunc_normal_(layer->weight, 0.02);
  if (bias) torch::nn::init::zeros_(layer->bias);
  return layer;
}

torch::Tensor window_partition(const torch::Tensor& x, int64_t w) {
  const auto B = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
  return x.view({B, H / w, w, W / w, w, C}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, w * w, C});
}

torch::Tensor window_reverse(const torch::Tensor& windows, int64_t w, int64_t B, int64_t H, int64_t W) {
  const auto C = windows.size(-1);
  return windows.view({B, H / w, W / w, w, w, C}).permute({0, 1, 3, 2, 4, 5}).reshape({B, H, W, C});
}

torch::Tensor relative_position_index(int64_t w) {
  auto coords = torch::stack(torch::meshgrid({torch::arange(w), torch::arange(w)}, "ij"));  // 2,w,w
  auto flat = coords.flatten(1);                                                           // 2,w*w
  auto rel = (flat.unsqueeze(2) - flat.unsqueeze(1)).permute({1, 2, 0}).contiguous();     // N,N,2
  rel.select(2, 0).add_(w - 1);
  rel.select(2, 1).add_(w - 1);
  rel.select(2, 0).mul_(2 * w - 1);
  return rel.sum(-1);
}

// Log-spaced relative coordinates fed to the SwinV2 continuous position bias MLP.
torch::Tensor relative_coords_table(int64_t w, int64_t pretrained_w) {
  auto r = torch::arange(-(w - 1), w, torch::kFloat32);
  auto table = torch::stack(torch::meshgrid({r, r}, "ij")).permute({1, 2, 0}).contiguous().unsqueeze(0);
  const double denom = pretrained_w > 0 ? static_cast<double>(pretrained_w - 1) : static_cast<double>(w - 1);
  table = table / std::max(denom, 1.0) * 8.0;
  return torch::sign(table) * torch::log2(table.abs() + 1.0) / std::log2(8.0);
}

torch::Tensor shifted_window_mask(int64_t H, int64_t W, int64_t w, int64_t shift) {
  auto img = torch::zeros({1, H, W, 1});
  int64_t id = 0;
  const std::array<std::pair<int64_t, int64_t>, 3> bands{{{0, H - w}, {H - w, H - shift}, {H - shift, H}}};
  const std::array<std::pair<int64_t, int64_t>, 3> cols{{{0, W - w}, {W - w, W - shift}, {W - shift, W}}};
  for (const auto& [h0, h1] : bands)
    for (const auto& [w0, w1] : cols) {
      if (h1 > h0 && w1 > w0)
        img.narrow(1, h0, h1 - h0).narrow(2, w0, w1 - w0).fill_(static_cast<double>(id));
      ++id;
    }
  auto mw = window_partition(img, w).squeeze(-1);  // nW, N
  auto diff = mw.unsqueeze(1) - mw.unsqueeze(2);
  return torch::where(diff != 0, torch::full_like(diff, -100.0), torch::zeros_like(diff));
}

class SwinBlockImpl : public torch::nn::Module {
 public:
  SwinBlockImpl(const SwinArch& arch, int64_t dim, int64_t heads, int64_t shift, double drop_path)
      : version_(arch.version), dim_(dim), heads_(heads), window_(arch.window), shift_(shift), drop_path_(drop_path) {
    norm_before_ = register_module("layernorm_before", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-5)));
    auto attention = register_module("attention", std::make_shared<Node>());
    auto self = attention->register_module("self", std::make_shared<Node>());
    query_ = make_linear(*self, "query", dim, dim);
    key_ = make_linear(*self, "key", dim, dim, /*bias=*/version_ == 1);
    value_ = make_linear(*self, "value", dim, dim);
    const auto w = window_;
    if (version_ == 1) {
      bias_table_ = self->register_parameter("relative_position_bias_table", torch::zeros({(2 * w - 1) * (2 * w - 1), heads}));
      trunc_normal_(bias_table_, 0.02);
    } else {
      logit_scale_ = self->register_parameter("logit_scale", torch::log(10.0 * torch::ones({heads, 1, 1})));
      auto mlp = self->register_module("continuous_position_bias_mlp", torch::nn::Sequential(
          torch::nn::Linear(torch::nn::LinearOptions(2, 512).bias(true)), torch::nn::ReLU(),
          torch::nn::Linear(torch::nn::LinearOptions(512, heads).bias(false))));
      cpb_mlp_ = mlp;
      coords_table_ = self->register_buffer("relative_coords_table", relative_coords_table(w, arch.pretrained_window));
    }
    rel_index_ = self->register_buffer("relative_position_index", relative_position_index(w));
    auto output = attention->register_module("output", std::make_shared<Node>());
    attn_out_ = make_linear(*output, "dense", dim, dim);
    norm_after_ = register_module("layernorm_after", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-5)));
    const auto hidden = static_cast<int64_t>(dim * arch.mlp_ratio);
    auto intermediate = register_module("intermediate", std::make_shared<Node>());
    fc1_ = make_linear(*intermediate, "dense", dim, hidden);
    auto out = register_module("output", std::make_shared<Node>());
    fc2_ = make_linear(*out, "dense", hidden, dim);
  }

  torch::Tensor forward(const torch::Tensor& x, int64_t H, int64_t W) {
    const auto B = x.size(0), C = x.size(2);
    auto shortcut = x;
    auto h = version_ == 1 ? norm_before_->forward(x) : x;
    h = h.view({B, H, W, C});

    const auto w = window_;
    const auto pad_h = (w - H % w) % w, pad_w = (w - W % w) % w;
    if (pad_h > 0 || pad_w > 0) h = F::pad(h, F::PadFuncOptions({0, 0, 0, pad_w, 0, pad_h}));
    const auto Hp = H + pad_h, Wp = W + pad_w;

    torch::Tensor mask;
    if (shift_ > 0) {
      h = torch::roll(h, {-shift_, -shift_}, {1, 2});
      mask = shifted_window_mask(Hp, Wp, w, shift_).to(h.dtype());
    }
    auto windows = attend(window_partition(h, w), mask);
    h = window_reverse(windows, w, B, Hp, Wp);
    if (shift_ > 0) h = torch::roll(h, {shift_, shift_}, {1, 2});
    if (pad_h > 0 || pad_w > 0) h = h.narrow(1, 0, H).narrow(2, 0, W);
    h = h.contiguous().view({B, H * W, C});

    if (version_ == 1) {
      auto y = shortcut + drop_path(h, drop_path_, is_training());
      auto m = nn::linear(fc2_, F::gelu(nn::linear(fc1_, norm_after_->forward(y))));
      return y + drop_path(m, drop_path_, is_training());
    }
    auto y = shortcut + drop_path(norm_before_->forward(h), drop_path_, is_training());
    auto m = nn::linear(fc2_, F::gelu(nn::linear(fc1_, y)));
    return y + drop_path(norm_after_->forward(m), drop_path_, is_training());
  }

 private:
  torch::Tensor attend(const torch::Tensor& x, const torch::Tensor& mask) {
    const auto Bn = x.size(0), N = x.size(1), C = x.size(2);
    const auto hd = C / heads_;
    auto split = [&](const torch::Tensor& t) { return t.view({Bn, N, heads_, hd}).transpose(1, 2); };
    auto q = split(nn::linear(query_, x));
    auto k = split(nn::linear(key_, x));
    auto v = split(nn::linear(value_, x));

    torch::Tensor attn, bias;
    if (version_ == 1) {
      attn = nn::matmul(q * std::pow(static_cast<double>(hd), -0.5), k.transpose(-2, -1));
      bias = bias_table_.index_select(0, rel_index_.view(-1));
    } else {
      auto qn = F::normalize(q, F::NormalizeFuncOptions().dim(-1));
      auto kn = F::normalize(k, F::NormalizeFuncOptions().dim(-1));
      attn = nn::matmul(qn, kn.transpose(-2, -1)) * torch::exp(logit_scale_.clamp_max(std::log(100.0)));
      auto table = cpb_mlp_->forward(coords_table_.to(x.dtype())).view({-1, heads_});
      bias = 16.0 * torch::sigmoid(table.index_select(0, rel_index_.view(-1)));
    }
    attn = attn + bias.view({N, N, heads_}).permute({2, 0, 1}).unsqueeze(0).to(attn.dtype());
    if (mask.defined()) {
      const auto nW = mask.size(0);
      attn = attn.view({Bn / nW, nW, heads_, N, N}) + mask.unsqueeze(1).unsqueeze(0);
      attn = attn.view({Bn, heads_, N, N});
    }
    attn = torch::softmax(attn, -1);
    auto out = nn::matmul(attn, v).transpose(1, 2).reshape({Bn, N, C});
    return nn::linear(attn_out_, out);
  }

  int version_;
  int64_t dim_, heads_, window_, shift_;
  double drop_path_;
  torch::nn::LayerNorm norm_before_{nullptr}, norm_after_{nullptr};
  torch::nn::Linear query_{nullptr}, key_{nullptr}, value_{nullptr}, attn_out_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
  torch::Tensor bias_table_, rel_index_, logit_scale_, coords_table_;
  torch::nn::Sequential cpb_mlp_{nullptr};
};

class PatchMergingImpl : public torch::nn::Module {
 public:
  PatchMergingImpl(int version, int64_t dim) : version_(version) {
    reduction_ = make_linear(*this, "reduction", 4 * dim, 2 * dim, /*bias=*/false);
    norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({version == 1 ? 4 * dim : 2 * dim})));
  }

  torch::Tensor forward(const torch::Tensor& x, int64_t& H, int64_t& W) {
    const auto B = x.size(0), C = x.size(2);
    auto h = x.view({B, H, W, C});
    if (H % 2 == 1 || W % 2 == 1) h = F::pad(h, F::PadFuncOptions({0, 0, 0, W % 2, 0, H % 2}));
    using torch::indexing::Slice;
    auto x0 = h.index({Slice(), Slice(0, None, 2), Slice(0, None, 2)});
    auto x1 = h.index({Slice(), Slice(1, None, 2), Slice(0, None, 2)});
    auto x2 = h.index({Slice(), Slice(0, None, 2), Slice(1, None, 2)});
    auto x3 = h.index({Slice(), Slice(1, None, 2), Slice(1, None, 2)});
    H = (H + 1) / 2;
    W = (W + 1) / 2;
    auto merged = torch::cat({x0, x1, x2, x3}, -1).view({B, H * W, 4 * C});
    if (version_ == 1) return nn::linear(reduction_, norm_->forward(merged));
    return norm_->forward(nn::linear(reduction_, merged));
  }

 private:
  static constexpr auto None = torch::indexing::None;
  int version_;
  torch::nn::Linear reduction_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};

class SwinStageImpl : public torch::nn::Module {
 public:
  SwinStageImpl(const SwinArch& arch, int64_t dim, int64_t depth, int64_t heads, bool downsample,
                std::vector<double> drop_rates) {
    auto blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < depth; ++i) {
      const int64_t shift = (i % 2 == 1) ? arch.window / 2 : 0;
      auto block = std::make_shared<SwinBlockImpl>(arch, dim, heads, shift, drop_rates[i]);
      blocks->push_back(block);
      blocks_.push_back(block);
    }
    if (downsample) merge_ = register_module("downsample", std::make_shared<PatchMergingImpl>(arch.version, dim));
  }

  std::shared_ptr<SwinBlockImpl> block(size_t i) { return blocks_[i]; }
  size_t size() const { return blocks_.size(); }
  std::shared_ptr<PatchMergingImpl> merge() { return merge_; }

 private:
  std::vector<std::shared_ptr<SwinBlockImpl>> blocks_;
  std::shared_ptr<PatchMergingImpl> merge_;
};

}  // namespace

SwinEncoderImpl::SwinEncoderImpl(const SwinArch& arch) : arch_(arch) {
  if (arch.window < 1 || arch.embed_dim < 1) fail(Errc::invalid_spec, "invalid Swin architecture");
  for (int s = 0; s < 4; ++s)
    if (arch.heads[s] < 1 || (arch.embed_dim << s) % arch.heads[s] != 0)
      fail(Errc::invalid_spec, "Swin head count must divide stage width");

  auto embeddings = register_module("embeddings", std::make_shared<Node>());
  auto patch = embeddings->register_module("patch_embeddings", std::make_shared<Node>());
  projection_ = patch->register_module("projection",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(3, arch.embed_dim, 4).stride(4)));
  embed_norm_ = embeddings->register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({arch.embed_dim})));

  const int64_t total_depth = arch.depths[0] + arch.depths[1] + arch.depths[2] + arch.depths[3];
  auto encoder = register_module("encoder", std::make_shared<Node>());
  auto layers = encoder->register_module("layers", torch::nn::ModuleList());
  int64_t block_index = 0;
  for (int s = 0; s < 4; ++s) {
    std::vector<double> rates;
    for (int64_t i = 0; i < arch.depths[s]; ++i, ++block_index)
      rates.push_back(total_depth > 1 ? arch.drop_path_rate * block_index / (total_depth - 1) : 0.0);
    auto stage = std::make_shared<SwinStageImpl>(arch, arch.embed_dim << s, arch.depths[s], arch.heads[s], s < 3, rates);
    layers->push_back(stage);
    stages_.push_back(stage);
  }
  auto norms = register_module("hidden_states_norms", std::make_shared<Node>());
  for (int s = 0; s < 4; ++s)
    out_norms_.push_back(norms->register_module("stage" + std::to_string(s + 1),
                                                torch::nn::LayerNorm(torch::nn::LayerNormOptions({arch.embed_dim << s}))));
}

std::vector<int64_t> SwinEncoderImpl::channels() const {
  return {arch_.embed_dim, arch_.embed_dim * 2, arch_.embed_dim * 4, arch_.embed_dim * 8};
}

bool SwinEncoderImpl::optional_in_checkpoint(const std::string& name) const {
  return name.rfind("hidden_states_norms.", 0) == 0;
}

std::vector<torch::Tensor> SwinEncoderImpl::forward(const torch::Tensor& images) {
  auto x = images;
  const auto pad_h = (4 - x.size(2) % 4) % 4, pad_w = (4 - x.size(3) % 4) % 4;
  if (pad_h || pad_w) x = F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}));
  x = nn::conv(projection_, x);
  const auto B = x.size(0), C0 = x.size(1);
  int64_t H = x.size(2), W = x.size(3);
  x = embed_norm_->forward(x.flatten(2).transpose(1, 2));
  (void)C0;

  std::vector<torch::Tensor> outs;
  for (size_t s = 0; s < stages_.size(); ++s) {
    auto stage = std::static_pointer_cast<SwinStageImpl>(stages_[s]);
    for (size_t i = 0; i < stage->size(); ++i) x = stage->block(i)->forward(x, H, W);
    const auto C = x.size(2);
    outs.push_back(out_norms_[s]->forward(x).view({B, H, W, C}).permute({0, 3, 1, 2}).contiguous());
    if (auto merge = stage->merge()) x = merge->forward(x, H, W);
  }
  return outs;
}

}  // namespace cdet
