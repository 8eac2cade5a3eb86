#include "cdet/eval/overlay.hpp"

#include "cdet/data/dataset.hpp"
#include "cdet/error.hpp"

namespace cdet {

namespace {

torch::Tensor display(const torch::Tensor& img, bool normalized) {
  auto x = img.to(torch::kCPU, torch::kFloat32);
  return (normalized ? denormalize(x) : x).clamp(0.0, 1.0);
}

void paint(torch::Tensor& img, const torch::Tensor& where, std::array<float, 3> rgb) {
  for (int c = 0; c < 3; ++c) img[c].masked_fill_(where, rgb[c]);
}

}  // namespace

torch::Tensor render_overlay(const ImagePair& pair, const ChangeMask& pred, const ChangeMask& gt) {
  pair.check();
  if (pred.height() != pair.height() || pred.width() != pair.width() || gt.height() != pair.height() ||
      gt.width() != pair.width())
    fail(Errc::shape_error, "overlay masks do not match the image size");
  auto out = display(pair.post, pair.normalized).clone();
  auto p = pred.tensor().to(torch::kBool);
  auto g = gt.tensor().to(torch::kBool);
  paint(out, p & g, {1.0f, 1.0f, 1.0f});
  paint(out, p & ~g, {1.0f, 0.0f, 0.0f});
  paint(out, ~p & g, {0.0f, 0.0f, 1.0f});
  return out;
}

torch::Tensor render_panel(const ImagePair& pair, const ChangeMask& pred, const ChangeMask& gt) {
  auto overlay = render_overlay(pair, pred, gt);
  auto gt_rgb = gt.tensor().to(torch::kFloat32).unsqueeze(0).expand({3, -1, -1});
  return torch::cat({display(pair.pre, pair.normalized), display(pair.post, pair.normalized), gt_rgb, overlay}, 2);
}

}  // namespace cdet
