#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace cdet {

/// Multi-level feature extractor. forward() maps an NCHW image batch to four
/// NCHW maps at strides 4, 8, 16, 32.
class EncoderImpl : public torch::nn::Module {
 public:
  virtual std::vector<torch::Tensor> forward(const torch::Tensor& images) = 0;
  virtual std::vector<int64_t> channels() const = 0;
  std::vector<int64_t> strides() const { return {4, 8, 16, 32}; }

  /// First-layer kernel, compared against checkpoints after loading.
  virtual std::string probe_parameter() const = 0;

  /// Parameters a classification checkpoint may legitimately lack
  /// (for instance per-stage output norms added for dense prediction).
  virtual bool optional_in_checkpoint(const std::string& name) const { return false; }

  /// Hook to reshape checkpoint tensors whose layout depends on input size.
  virtual void adapt_checkpoint(std::map<std::string, torch::Tensor>& tensors) const {}

  /// Largest input side multiple the encoder requires.
  virtual int64_t size_divisor() const { return 32; }
};

using Encoder = std::shared_ptr<EncoderImpl>;

/// Drops stochastic-depth residuals with probability `rate` in training mode.
torch::Tensor drop_path(const torch::Tensor& x, double rate, bool training);

}  // namespace cdet
