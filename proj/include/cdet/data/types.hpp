#pragma once

#include <string>
#include <string_view>

#include <torch/torch.h>

namespace cdet {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Co-registered pre/post images, float32 CHW with 3 channels.
/// Pixel values are in [0,1] until preprocess() normalizes them.
struct ImagePair {
  torch::Tensor pre;
  torch::Tensor post;
  std::string sample_id;
  bool normalized = false;

  int64_t height() const { return pre.size(1); }
  int64_t width() const { return pre.size(2); }

  /// Throws shape-error unless both images are 3xHxW with equal sizes.
  void check() const;
};

/// HxW uint8 grid holding only 0 (unchanged) and 1 (changed).
class ChangeMask {
 public:
  ChangeMask() = default;

  /// Validates dtype-agnostic input; any value outside {0,1} is invalid-mask.
  static ChangeMask from_tensor(const torch::Tensor& values);
  /// Thresholds `prob > threshold` into a mask.
  static ChangeMask from_probability(const torch::Tensor& prob, double threshold);
  static ChangeMask zeros(int64_t height, int64_t width);

  const torch::Tensor& tensor() const { return mask_; }
  int64_t height() const { return mask_.size(0); }
  int64_t width() const { return mask_.size(1); }
  int64_t count_changed() const;
  bool defined() const { return mask_.defined(); }

 private:
  explicit ChangeMask(torch::Tensor mask) : mask_(std::move(mask)) {}
  torch::Tensor mask_;
};

struct Sample {
  ImagePair pair;
  ChangeMask gt;
  Split split = Split::train;

  void check() const;
};

}  // namespace cdet
