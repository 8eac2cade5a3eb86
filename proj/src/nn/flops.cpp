#include "cdet/nn/flops.hpp"

namespace cdet::nn {

namespace {
thread_local FlopCounter* active = nullptr;
}

FlopCounter::FlopCounter() : previous_(active) { active = this; }

FlopCounter::~FlopCounter() {
  if (previous_) previous_->total_ += total_;
  active = previous_;
}

void FlopCounter::add(int64_t flops) {
  if (active) active->total_ += flops;
}

torch::Tensor linear(torch::nn::Linear& layer, const torch::Tensor& x) {
  auto y = layer->forward(x);
  if (active) {
    const auto& w = layer->weight;
    const int64_t rows = x.numel() / x.size(-1);
    FlopCounter::add(2 * rows * w.size(0) * w.size(1));
  }
  return y;
}

torch::Tensor conv(torch::nn::Conv2d& layer, const torch::Tensor& x) {
  auto y = layer->forward(x);
  if (active) {
    const auto& w = layer->weight;  // out, in/groups, kh, kw
    const int64_t per_output = w.size(1) * w.size(2) * w.size(3);
    FlopCounter::add(2 * y.numel() * per_output);
  }
  return y;
}

torch::Tensor matmul(const torch::Tensor& a, const torch::Tensor& b) {
  auto y = torch::matmul(a, b);
  if (active) FlopCounter::add(2 * y.numel() * a.size(-1));
  return y;
}

}  // namespace cdet::nn
