#include "cdet/data/types.hpp"

#include "cdet/error.hpp"

namespace cdet {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  fail(Errc::invalid_split, "unknown split '" + std::string(text) + "'");
}

void ImagePair::check() const {
  if (!pre.defined() || !post.defined() || pre.dim() != 3 || post.dim() != 3 || pre.size(0) != 3)
    fail(Errc::shape_error, "sample '" + sample_id + "': images must be 3xHxW");
  if (pre.sizes() != post.sizes())
    fail(Errc::shape_error, "sample '" + sample_id + "': pre/post sizes differ");
}

ChangeMask ChangeMask::from_tensor(const torch::Tensor& values) {
  if (!values.defined() || values.dim() != 2)
    fail(Errc::shape_error, "change mask must be a 2-D tensor");
  auto as_u8 = values.to(torch::kUInt8);
  auto non_binary = values.ne(0).logical_and(values.ne(1));
  if (non_binary.any().item<bool>())
    fail(Errc::invalid_mask, "change mask contains values other than 0 and 1");
  return ChangeMask(as_u8.contiguous());
}

ChangeMask ChangeMask::from_probability(const torch::Tensor& prob, double threshold) {
  if (!prob.defined() || prob.dim() != 2)
    fail(Errc::shape_error, "probability map must be a 2-D tensor");
  return ChangeMask(prob.gt(threshold).to(torch::kUInt8).contiguous());
}

ChangeMask ChangeMask::zeros(int64_t height, int64_t width) {
  return ChangeMask(torch::zeros({height, width}, torch::kUInt8));
}

int64_t ChangeMask::count_changed() const {
  return mask_.sum().item<int64_t>();
}

void Sample::check() const {
  pair.check();
  if (!gt.defined() || gt.height() != pair.height() || gt.width() != pair.width())
    fail(Errc::corrupt_sample, "sample '" + pair.sample_id + "': mask size differs from images");
}

}  // namespace cdet
