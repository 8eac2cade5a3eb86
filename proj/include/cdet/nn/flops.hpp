#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace cdet::nn {

// Floating-point operation accounting for the layers that dominate compute.
// Counts follow the PyTorch profiler convention: one multiply-add is two
// FLOPs for convolutions, linear layers, and batched matrix products;
// elementwise ops, norms, and resampling are not counted.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  int64_t total() const { return total_; }

  static void add(int64_t flops);

 private:
  int64_t total_ = 0;
  FlopCounter* previous_ = nullptr;
};

torch::Tensor linear(torch::nn::Linear& layer, const torch::Tensor& x);
torch::Tensor conv(torch::nn::Conv2d& layer, const torch::Tensor& x);
torch::Tensor matmul(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace cdet::nn
