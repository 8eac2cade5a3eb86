#pragma once

#include <vector>

#include <torch/torch.h>

namespace cdet {

/// Multi-level NCHW feature maps, finest first, at strides 4/8/16/32.
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;
  std::vector<int64_t> strides{4, 8, 16, 32};

  size_t size() const { return levels.size(); }
  /// shape-error unless four levels with the standard strides and sizes
  /// consistent with an input of input_h x input_w.
  void check(int64_t input_h, int64_t input_w) const;
};

/// Level-wise f1 - f2. shape-error when the pyramids are not aligned.
FeaturePyramid fuse_subtract(const FeaturePyramid& f1, const FeaturePyramid& f2);

}  // namespace cdet
