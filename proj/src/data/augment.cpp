#include "cdet/data/augment.hpp"

#include <cmath>

#include "cdet/data/dataset.hpp"
#include "cdet/error.hpp"

namespace cdet {

namespace F = torch::nn::functional;

void AugmentationConfig::validate() const {
  auto check_range = [](const Interval& r, const char* name) {
    if (!(r.first <= r.second)) fail(Errc::invalid_config, std::string("augmentation.") + name + " is empty");
  };
  if (!(probability >= 0.0 && probability <= 1.0))
    fail(Errc::invalid_config, "augmentation.probability must lie in [0,1]");
  check_range(crop_ratio_range, "crop_ratio_range");
  check_range(rotation_range_deg, "rotation_range_deg");
  check_range(color_factor_range, "color_factor_range");
  check_range(hue_range, "hue_range");
  if (crop_ratio_range.first <= 0.0 || crop_ratio_range.second > 1.0)
    fail(Errc::invalid_config, "augmentation.crop_ratio_range must lie in (0,1]");
  if (blur_kernel_choices.empty()) fail(Errc::invalid_config, "augmentation.blur_kernel_choices is empty");
  for (int k : blur_kernel_choices)
    if (k < 3 || k % 2 == 0) fail(Errc::invalid_config, "blur kernel sizes must be odd and >= 3");
}

double blur_sigma_for_kernel(int kernel) {
  if (kernel < 3 || kernel % 2 == 0) fail(Errc::invalid_argument, "blur kernel must be odd and >= 3");
  double sigma = (kernel - 1) / 7.0;
  // (k-1)/7 * 3.5 can land just below the integer in floating point.
  while (static_cast<int>(sigma * 3.5) * 2 + 1 < kernel) sigma = std::nextafter(sigma, 1e9);
  return sigma;
}

torch::Tensor source_coordinates(const AugmentationTrace& trace, int64_t height, int64_t width) {
  auto ys = torch::arange(height, torch::kFloat64).view({height, 1}).expand({height, width});
  auto xs = torch::arange(width, torch::kFloat64).view({1, width}).expand({height, width});
  torch::Tensor x = xs.clone(), y = ys.clone();

  // Output -> source: undo crop, then rotation, then vertical and horizontal flips.
  if (trace.crop) {
    const auto& c = *trace.crop;
    x = c.x0 + (x + 0.5) * (static_cast<double>(c.side) / width) - 0.5;
    y = c.y0 + (y + 0.5) * (static_cast<double>(c.side) / height) - 0.5;
  }
  if (trace.rotation_deg) {
    const double theta = *trace.rotation_deg * M_PI / 180.0;
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    const double c = std::cos(theta), s = std::sin(theta);
    auto dx = x - cx, dy = y - cy;
    x = c * dx - s * dy + cx;
    y = s * dx + c * dy + cy;
  }
  if (trace.vflip) y = (height - 1) - y;
  if (trace.hflip) x = (width - 1) - x;
  return torch::stack({x, y}, -1);
}

namespace {

torch::Tensor rgb_to_hsv(const torch::Tensor& rgb) {
  auto r = rgb[0], g = rgb[1], b = rgb[2];
  auto maxc = std::get<0>(rgb.max(0));
  auto minc = std::get<0>(rgb.min(0));
  auto delta = maxc - minc;
  auto v = maxc;
  auto s = torch::where(maxc > 0, delta / maxc.clamp_min(1e-12), torch::zeros_like(maxc));
  auto safe = delta.clamp_min(1e-12);
  auto rc = (maxc - r) / safe, gc = (maxc - g) / safe, bc = (maxc - b) / safe;
  auto h = torch::where(maxc == r, bc - gc, torch::where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc));
  h = torch::where(delta > 0, torch::remainder(h / 6.0, 1.0), torch::zeros_like(h));
  return torch::stack({h, s, v});
}

torch::Tensor hsv_to_rgb(const torch::Tensor& hsv) {
  auto h = hsv[0], s = hsv[1], v = hsv[2];
  auto h6 = h * 6.0;
  auto i = torch::floor(h6);
  auto f = h6 - i;
  auto sector = torch::remainder(i, 6.0);
  auto p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  auto pick = [&](const torch::Tensor& a0, const torch::Tensor& a1, const torch::Tensor& a2,
                  const torch::Tensor& a3, const torch::Tensor& a4, const torch::Tensor& a5) {
    return torch::where(sector == 0, a0,
           torch::where(sector == 1, a1,
           torch::where(sector == 2, a2,
           torch::where(sector == 3, a3, torch::where(sector == 4, a4, a5)))));
  };
  return torch::stack({pick(v, q, p, p, t, v), pick(t, v, v, q, p, p), pick(p, p, t, v, v, q)});
}

torch::Tensor grayscale(const torch::Tensor& rgb) {
  return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

// Resample with one shared source-coordinate field. Pixels whose source lies
// outside the image are zero-filled (images) or marked unchanged (mask).
torch::Tensor resample(const torch::Tensor& chw, const torch::Tensor& src, const torch::Tensor& valid) {
  const auto h = chw.size(1), w = chw.size(2);
  auto gx = (2.0 * src.select(-1, 0) + 1.0) / w - 1.0;
  auto gy = (2.0 * src.select(-1, 1) + 1.0) / h - 1.0;
  auto grid = torch::stack({gx, gy}, -1).unsqueeze(0).to(chw.scalar_type());
  auto opts = F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false);
  auto out = F::grid_sample(chw.unsqueeze(0), grid, opts).squeeze(0);
  return out * valid.to(chw.scalar_type()).unsqueeze(0);
}

torch::Tensor resample_mask(const torch::Tensor& mask_hw, const torch::Tensor& src, const torch::Tensor& valid) {
  // Nearest neighbour with the same half-to-even rounding grid_sample uses.
  const auto h = mask_hw.size(0), w = mask_hw.size(1);
  auto ix = torch::round(src.select(-1, 0)).clamp(0, w - 1).to(torch::kLong);
  auto iy = torch::round(src.select(-1, 1)).clamp(0, h - 1).to(torch::kLong);
  auto flat = mask_hw.reshape({-1}).index_select(0, (iy * w + ix).reshape({-1})).view({h, w});
  return flat * valid.to(mask_hw.scalar_type());
}

}  // namespace

torch::Tensor color_jitter(const torch::Tensor& rgb, const AugmentationTrace::Color& p) {
  auto x = (rgb * p.brightness).clamp(0.0, 1.0);
  auto mean = grayscale(x).mean();
  x = ((x - mean) * p.contrast + mean).clamp(0.0, 1.0);
  auto gray = grayscale(x).unsqueeze(0);
  x = ((x - gray) * p.saturation + gray).clamp(0.0, 1.0);
  if (p.hue != 0.0) {
    auto hsv = rgb_to_hsv(x);
    auto h = torch::remainder(hsv[0] + p.hue, 1.0);
    x = hsv_to_rgb(torch::stack({h, hsv[1], hsv[2]})).clamp(0.0, 1.0);
  }
  return x;
}

torch::Tensor gaussian_blur(const torch::Tensor& chw, int kernel, double sigma) {
  const int half = kernel / 2;
  auto offsets = torch::arange(-half, half + 1, chw.options());
  auto k1d = torch::exp(-(offsets * offsets) / (2.0 * sigma * sigma));
  k1d = k1d / k1d.sum();
  const auto c = chw.size(0);
  auto kx = k1d.view({1, 1, 1, kernel}).expand({c, 1, 1, kernel}).contiguous();
  auto ky = k1d.view({1, 1, kernel, 1}).expand({c, 1, kernel, 1}).contiguous();
  auto x = chw.unsqueeze(0);
  const bool can_reflect = chw.size(1) > half && chw.size(2) > half;
  auto pad_mode = can_reflect ? torch::nn::functional::PadFuncOptions::mode_t(torch::kReflect)
                              : torch::nn::functional::PadFuncOptions::mode_t(torch::kReplicate);
  x = F::pad(x, F::PadFuncOptions({half, half, 0, 0}).mode(pad_mode));
  x = F::conv2d(x, kx, F::Conv2dFuncOptions().groups(c));
  x = F::pad(x, F::PadFuncOptions({0, 0, half, half}).mode(pad_mode));
  x = F::conv2d(x, ky, F::Conv2dFuncOptions().groups(c));
  return x.squeeze(0);
}

Sample apply_paired_augmentation(const Sample& sample, const AugmentationConfig& config, Rng& rng) {
  AugmentationTrace trace;
  return apply_paired_augmentation(sample, config, rng, trace);
}

Sample apply_paired_augmentation(const Sample& sample, const AugmentationConfig& config, Rng& rng,
                                 AugmentationTrace& trace) {
  sample.check();
  trace = AugmentationTrace{};
  const auto h = sample.pair.height(), w = sample.pair.width();
  const double p = config.probability;

  if (config.enable_flip) {
    trace.hflip = chance(rng, p);
    trace.vflip = chance(rng, p);
    if (chance(rng, p)) trace.rotation_deg = uniform(rng, config.rotation_range_deg.first, config.rotation_range_deg.second);
  }
  if (config.enable_crop && chance(rng, p)) {
    const double ratio = uniform(rng, config.crop_ratio_range.first, config.crop_ratio_range.second);
    AugmentationTrace::Crop c;
    c.side = std::clamp<int64_t>(std::llround(ratio * std::min(h, w)), 1, std::min(h, w));
    c.x0 = std::uniform_int_distribution<int64_t>(0, w - c.side)(rng);
    c.y0 = std::uniform_int_distribution<int64_t>(0, h - c.side)(rng);
    trace.crop = c;
  }
  if (config.enable_color && chance(rng, p)) {
    AugmentationTrace::Color c;
    const auto& fr = config.color_factor_range;
    c.brightness = uniform(rng, fr.first, fr.second);
    c.contrast = uniform(rng, fr.first, fr.second);
    c.saturation = uniform(rng, fr.first, fr.second);
    c.hue = uniform(rng, config.hue_range.first, config.hue_range.second);
    trace.color = c;
  }
  if (config.enable_blur && chance(rng, p)) {
    const auto& ks = config.blur_kernel_choices;
    const int k = ks[std::uniform_int_distribution<size_t>(0, ks.size() - 1)(rng)];
    trace.blur = AugmentationTrace::Blur{k, blur_sigma_for_kernel(k)};
  }

  Sample out = sample;
  if (trace.geometric()) {
    auto pre = sample.pair.pre, post = sample.pair.post;
    auto mask = sample.gt.tensor();
    if (!trace.rotation_deg && !trace.crop) {
      // Pure flips are exact permutations.
      std::vector<int64_t> dims;
      if (trace.vflip) dims.push_back(-2);
      if (trace.hflip) dims.push_back(-1);
      pre = pre.flip(dims);
      post = post.flip(dims);
      mask = mask.flip(dims);
    } else {
      auto src = source_coordinates(trace, h, w);
      auto sx = src.select(-1, 0), sy = src.select(-1, 1);
      auto valid = (sx >= -0.5) & (sx <= w - 0.5) & (sy >= -0.5) & (sy <= h - 0.5);
      pre = resample(pre, src, valid);
      post = resample(post, src, valid);
      mask = resample_mask(mask, src, valid);
    }
    out.pair.pre = pre.contiguous();
    out.pair.post = post.contiguous();
    out.gt = ChangeMask::from_tensor(mask);
  }

  if (trace.color || trace.blur) {
    auto photometric = [&](torch::Tensor img) {
      if (trace.color) {
        auto rgb = sample.pair.normalized ? denormalize(img) : img;
        rgb = color_jitter(rgb, *trace.color);
        img = sample.pair.normalized ? normalize(rgb) : rgb;
      }
      if (trace.blur) img = gaussian_blur(img, trace.blur->kernel, trace.blur->sigma);
      return img.contiguous();
    };
    out.pair.pre = photometric(out.pair.pre);
    out.pair.post = photometric(out.pair.post);
  }
  return out;
}

}  // namespace cdet
