#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "cdet/data/types.hpp"
#include "cdet/random.hpp"

namespace cdet {

using Interval = std::pair<double, double>;

struct AugmentationConfig {
  bool enable_flip = false;   // horizontal flip, vertical flip, rotation
  bool enable_crop = false;
  bool enable_color = false;  // brightness, contrast, saturation, hue
  bool enable_blur = false;
  double probability = 0.30;
  Interval crop_ratio_range{0.3, 1.0};
  Interval rotation_range_deg{-90.0, 90.0};
  Interval color_factor_range{0.7, 1.3};
  Interval hue_range{-0.05, 0.05};
  std::vector<int> blur_kernel_choices{3, 5, 7, 9};

  void validate() const;
  bool any_enabled() const { return enable_flip || enable_crop || enable_color || enable_blur; }
};

/// Parameters of every transform that fired for one sample.
struct AugmentationTrace {
  struct Crop {
    int64_t x0 = 0, y0 = 0, side = 0;
  };
  struct Color {
    double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
  };
  struct Blur {
    int kernel = 3;
    double sigma = 0.0;
  };

  bool hflip = false;
  bool vflip = false;
  std::optional<double> rotation_deg;
  std::optional<Crop> crop;
  std::optional<Color> color;
  std::optional<Blur> blur;

  bool geometric() const { return hflip || vflip || rotation_deg || crop; }
};

/// Smallest sigma with kernel == int(sigma * 3.5) * 2 + 1.
double blur_sigma_for_kernel(int kernel);

/// For each output pixel, the (x, y) source pixel coordinate of the fired
/// geometric transforms, as an HxWx2 double tensor.
torch::Tensor source_coordinates(const AugmentationTrace& trace, int64_t height, int64_t width);

/// Each enabled transform fires independently with config.probability.
/// Geometric transforms hit pre, post and mask with identical parameters;
/// photometric ones hit both images identically and never the mask.
Sample apply_paired_augmentation(const Sample& sample, const AugmentationConfig& config, Rng& rng);
Sample apply_paired_augmentation(const Sample& sample, const AugmentationConfig& config, Rng& rng,
                                 AugmentationTrace& trace);

/// Photometric primitives, exposed for tests. Inputs are 3xHxW in [0,1].
torch::Tensor color_jitter(const torch::Tensor& rgb, const AugmentationTrace::Color& params);
torch::Tensor gaussian_blur(const torch::Tensor& chw, int kernel, double sigma);

}  // namespace cdet
