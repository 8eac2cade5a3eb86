#include "cdet/io/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cdet/error.hpp"

namespace cdet::io {

namespace {

cv::Mat imread_checked(const std::filesystem::path& path, int flags) {
  cv::Mat img;
  try {
    img = cv::imread(path.string(), flags);
  } catch (const cv::Exception& e) {
    fail(Errc::io_error, "cannot decode '" + path.string() + "': " + e.what());
  }
  if (img.empty()) fail(Errc::io_error, "cannot decode '" + path.string() + "'");
  if (img.depth() != CV_8U) fail(Errc::io_error, "'" + path.string() + "' is not an 8-bit image");
  return img;
}

void imwrite_checked(const std::filesystem::path& path, const cv::Mat& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception& e) {
    fail(Errc::io_error, "cannot write '" + path.string() + "': " + e.what());
  }
  if (!ok) fail(Errc::io_error, "cannot write '" + path.string() + "'");
}

}  // namespace

torch::Tensor read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = imread_checked(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0f).contiguous();
}

ChangeMask read_label(const std::filesystem::path& path) {
  cv::Mat gray = imread_checked(path, cv::IMREAD_GRAYSCALE);
  auto hw = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).clone();
  return ChangeMask::from_tensor(hw.gt(127).to(torch::kUInt8));
}

void write_rgb(const std::filesystem::path& path, const torch::Tensor& hwc_u8) {
  auto t = hwc_u8.to(torch::kUInt8).contiguous();
  if (t.dim() != 3 || t.size(2) != 3) fail(Errc::shape_error, "write_rgb expects HxWx3");
  cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  imwrite_checked(path, bgr);
}

void write_rgb_float(const std::filesystem::path& path, const torch::Tensor& chw) {
  auto u8 = chw.clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).permute({1, 2, 0});
  write_rgb(path, u8);
}

void write_label(const std::filesystem::path& path, const ChangeMask& mask) {
  auto t = mask.tensor().mul(255).to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr());
  imwrite_checked(path, gray);
}

}  // namespace cdet::io
