#include "cdet/data/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "cdet/error.hpp"
#include "cdet/random.hpp"

namespace cdet {

namespace {

constexpr float kBackgroundLo = 0.05f;
constexpr float kBackgroundHi = 0.5f;
constexpr float kChangedLo = 0.7f;

struct Shape {
  bool ellipse;
  int64_t cx, cy, rx, ry;  // center and half extents in pixels
};

template <typename Fn>
void for_each_pixel(const Shape& s, int64_t size, Fn&& fn) {
  const int64_t y0 = std::max<int64_t>(0, s.cy - s.ry), y1 = std::min<int64_t>(size - 1, s.cy + s.ry);
  const int64_t x0 = std::max<int64_t>(0, s.cx - s.rx), x1 = std::min<int64_t>(size - 1, s.cx + s.rx);
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      if (s.ellipse) {
        const double dx = (x - s.cx) / (s.rx + 0.5), dy = (y - s.cy) / (s.ry + 0.5);
        if (dx * dx + dy * dy > 1.0) continue;
      }
      fn(y, x);
    }
  }
}

Shape random_shape(Rng& rng, int64_t size, double max_area) {
  const double lo = std::max(1.0, size / 32.0), hi = std::max(lo, size / 8.0);
  Shape s{};
  s.ellipse = chance(rng, 0.5);
  s.rx = static_cast<int64_t>(std::lround(uniform(rng, lo, hi)));
  s.ry = static_cast<int64_t>(std::lround(uniform(rng, lo, hi)));
  // Shrink so that one shape never overshoots the remaining budget by much.
  while ((2 * s.rx + 1) * (2 * s.ry + 1) > max_area && (s.rx > 0 || s.ry > 0)) {
    if (s.rx >= s.ry) --s.rx; else --s.ry;
  }
  s.cx = static_cast<int64_t>(uniform(rng, 0.0, static_cast<double>(size - 1)));
  s.cy = static_cast<int64_t>(uniform(rng, 0.0, static_cast<double>(size - 1)));
  return s;
}

torch::Tensor smooth_background(Rng& rng, int64_t size) {
  auto img = torch::zeros({3, size, size});
  auto acc = img.accessor<float, 3>();
  for (int64_t c = 0; c < 3; ++c) {
    const double base = uniform(rng, 0.15, 0.35);
    double fx[3], fy[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      fx[k] = uniform(rng, 0.5, 3.0) * 2.0 * M_PI / size;
      fy[k] = uniform(rng, 0.5, 3.0) * 2.0 * M_PI / size;
      ph[k] = uniform(rng, 0.0, 2.0 * M_PI);
      amp[k] = uniform(rng, 0.02, 0.05);
    }
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        double v = base;
        for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
        acc[c][y][x] = static_cast<float>(std::clamp(v, double(kBackgroundLo), double(kBackgroundHi)));
      }
  }
  return img;
}

Sample make_one(uint64_t seed, int64_t index, double change_ratio, int64_t size, Split split) {
  Rng rng(seed);
  auto pre = smooth_background(rng, size);
  auto pre_acc = pre.accessor<float, 3>();

  // Distractors present in both images.
  const int n_static = static_cast<int>(uniform(rng, 1.0, 4.0));
  for (int k = 0; k < n_static; ++k) {
    auto s = random_shape(rng, size, static_cast<double>(size * size));
    float color[3];
    for (auto& v : color) v = static_cast<float>(uniform(rng, kBackgroundLo, kBackgroundHi));
    for_each_pixel(s, size, [&](int64_t y, int64_t x) {
      for (int c = 0; c < 3; ++c) pre_acc[c][y][x] = color[c];
    });
  }

  auto post = pre.clone();
  auto post_acc = post.accessor<float, 3>();
  auto mask = torch::zeros({size, size}, torch::kUInt8);
  auto mask_acc = mask.accessor<uint8_t, 2>();

  const double total = static_cast<double>(size * size);
  const double target = std::max(1.0, uniform(rng, 0.5, 1.5) * change_ratio * total);
  int64_t changed = 0;
  for (int guard = 0; guard < 500 && changed < target; ++guard) {
    auto s = random_shape(rng, size, std::max(1.0, target - changed));
    const int strong = static_cast<int>(uniform(rng, 0.0, 2.999));
    float color[3];
    for (int c = 0; c < 3; ++c)
      color[c] = c == strong ? static_cast<float>(uniform(rng, kChangedLo, 1.0))
                             : static_cast<float>(uniform(rng, 0.0, 1.0));
    for_each_pixel(s, size, [&](int64_t y, int64_t x) {
      for (int c = 0; c < 3; ++c) post_acc[c][y][x] = color[c];
      if (!mask_acc[y][x]) {
        mask_acc[y][x] = 1;
        ++changed;
      }
    });
  }

  char id[32];
  std::snprintf(id, sizeof id, "syn_%05lld", static_cast<long long>(index));
  Sample out;
  out.split = split;
  out.pair.pre = pre;
  out.pair.post = post;
  out.pair.sample_id = id;
  out.gt = ChangeMask::from_tensor(mask);
  return out;
}

}  // namespace

std::vector<Sample> make_synthetic_dataset(int64_t n, double change_ratio, int64_t size,
                                           uint64_t seed, Split split) {
  if (n < 1) fail(Errc::invalid_argument, "synthetic dataset needs n >= 1");
  if (size < 32) fail(Errc::invalid_argument, "synthetic dataset needs size >= 32");
  if (!(change_ratio > 0.0 && change_ratio < 1.0))
    fail(Errc::invalid_argument, "change_ratio must lie in (0,1)");
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out.push_back(make_one(derive_seed(seed, "synthetic", static_cast<uint64_t>(i)), i, change_ratio, size, split));
  return out;
}

}  // namespace cdet
