#include "cdet/model/pyramid.hpp"

#include "cdet/error.hpp"

namespace cdet {

void FeaturePyramid::check(int64_t input_h, int64_t input_w) const {
  if (levels.size() != 4 || strides != std::vector<int64_t>{4, 8, 16, 32})
    fail(Errc::shape_error, "feature pyramid must have four levels at strides 4, 8, 16, 32");
  for (size_t i = 0; i < levels.size(); ++i) {
    const auto& t = levels[i];
    if (t.dim() != 4 || t.size(2) != input_h / strides[i] || t.size(3) != input_w / strides[i])
      fail(Errc::shape_error, "pyramid level " + std::to_string(i) + " has shape " + c10::str(t.sizes()) +
                                  ", expected spatial " + std::to_string(input_h / strides[i]) + "x" +
                                  std::to_string(input_w / strides[i]));
  }
}

FeaturePyramid fuse_subtract(const FeaturePyramid& f1, const FeaturePyramid& f2) {
  if (f1.size() != f2.size() || f1.strides != f2.strides)
    fail(Errc::shape_error, "pyramids have different level structure");
  FeaturePyramid out;
  out.strides = f1.strides;
  for (size_t i = 0; i < f1.size(); ++i) {
    if (f1.levels[i].sizes() != f2.levels[i].sizes())
      fail(Errc::shape_error, "pyramid level " + std::to_string(i) + " shapes differ: " +
                                  c10::str(f1.levels[i].sizes()) + " vs " + c10::str(f2.levels[i].sizes()));
    out.levels.push_back(f1.levels[i] - f2.levels[i]);
  }
  return out;
}

}  // namespace cdet
