#include "cdet/data/ingest.hpp"

#include <algorithm>
#include <array>

#include "cdet/data/synthetic.hpp"
#include "cdet/error.hpp"
#include "cdet/io/image_io.hpp"
#include "cdet/random.hpp"

namespace cdet {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::array<const char*, 3>, 5> kLayouts{{
    {"A", "B", "label"},
    {"A", "B", "OUT"},
    {"time1", "time2", "label"},
    {"im1", "im2", "label"},
    {"T1", "T2", "GT"},
}};

const std::array<std::string, 5> kImageExt{".png", ".jpg", ".jpeg", ".tif", ".tiff"};

bool is_image(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return std::find(kImageExt.begin(), kImageExt.end(), ext) != kImageExt.end();
}

fs::path find_split_dir(const fs::path& source, Split split) {
  std::vector<std::string> names{std::string(to_string(split))};
  if (split == Split::val) names.push_back("validation");
  for (const auto& n : names)
    if (fs::is_directory(source / n)) return source / n;
  return {};
}

// Member file for `stem` in `dir`, any supported extension.
fs::path member(const fs::path& dir, const std::string& stem) {
  for (const auto& ext : kImageExt)
    if (fs::exists(dir / (stem + ext))) return dir / (stem + ext);
  return {};
}

void write_sample(const fs::path& out, const std::string& id, const torch::Tensor& pre, const torch::Tensor& post,
                  const ChangeMask& gt) {
  io::write_rgb_float(out / "A" / (id + ".png"), pre);
  io::write_rgb_float(out / "B" / (id + ".png"), post);
  io::write_label(out / "label" / (id + ".png"), gt);
}

int64_t ingest_split(const fs::path& dir, DatasetName name, const fs::path& out, const IngestOptions& options) {
  std::array<const char*, 3> layout{};
  bool found = false;
  for (const auto& l : kLayouts) {
    if (fs::is_directory(dir / l[0]) && fs::is_directory(dir / l[1]) && fs::is_directory(dir / l[2])) {
      layout = l;
      found = true;
      break;
    }
  }
  if (!found) fail(Errc::io_error, dir.string() + ": no recognized A/B/label folder layout");

  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir / layout[0]))
    if (e.is_regular_file() && is_image(e.path())) stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());

  int64_t written = 0;
  for (const auto& stem : stems) {
    const auto a = member(dir / layout[0], stem);
    const auto b = member(dir / layout[1], stem);
    const auto l = member(dir / layout[2], stem);
    if (b.empty() || l.empty()) fail(Errc::io_error, "member '" + stem + "' lacks its post image or label in " + dir.string());
    auto pre = io::read_rgb(a);
    auto post = io::read_rgb(b);
    auto gt = io::read_label(l);
    if (pre.sizes() != post.sizes() || gt.height() != pre.size(1) || gt.width() != pre.size(2))
      fail(Errc::corrupt_sample, "member '" + stem + "': pre/post/label dimensions differ");

    if (name != DatasetName::OSCD) {
      write_sample(out, stem, pre, post, gt);
      ++written;
      continue;
    }
    const auto t = options.oscd_tile;
    for (int64_t y = 0; y + t <= pre.size(1); y += t) {
      for (int64_t x = 0; x + t <= pre.size(2); x += t) {
        char id[64];
        std::snprintf(id, sizeof id, "_%04ld_%04ld", static_cast<long>(y / t), static_cast<long>(x / t));
        auto crop = [&](const torch::Tensor& img) { return img.narrow(1, y, t).narrow(2, x, t); };
        auto tile_gt = ChangeMask::from_tensor(gt.tensor().narrow(0, y, t).narrow(1, x, t));
        write_sample(out, stem + id, crop(pre), crop(post), tile_gt);
        ++written;
      }
    }
  }
  return written;
}

}  // namespace

IngestReport ingest_dataset(const fs::path& source, DatasetName name, const fs::path& out,
                            const IngestOptions& options) {
  IngestReport report;
  if (name == DatasetName::SYNTHETIC) {
    for (auto split : {Split::train, Split::val, Split::test}) {
      const auto& s = options.synthetic;
      const int64_t n = split == Split::train ? s.n_train : split == Split::val ? s.n_val : s.n_test;
      report.counts[std::string(to_string(split))] = n;
      if (n == 0) continue;
      const auto samples = make_synthetic_dataset(n, s.change_ratio, options.synthetic_size,
                                                  derive_seed(s.seed, to_string(split)), split);
      const auto dir = out / std::string(to_string(split));
      for (const auto& smp : samples) write_sample(dir, smp.pair.sample_id, smp.pair.pre, smp.pair.post, smp.gt);
    }
    return report;
  }

  if (!fs::is_directory(source)) fail(Errc::io_error, "cannot read source '" + source.string() + "'");
  for (auto split : {Split::train, Split::val, Split::test}) {
    if (!has_split(name, split)) continue;
    const auto dir = find_split_dir(source, split);
    if (dir.empty()) {
      report.warnings.push_back("source has no " + std::string(to_string(split)) + " split");
      report.counts[std::string(to_string(split))] = 0;
      continue;
    }
    report.counts[std::string(to_string(split))] =
        ingest_split(dir, name, out / std::string(to_string(split)), options);
  }

  if (const auto expected = expected_counts(name)) {
    auto check = [&](const char* split, std::optional<int64_t> want) {
      if (!want) return;
      const auto got = report.counts[split];
      if (got != *want)
        report.warnings.push_back(std::string(split) + ": expected " + std::to_string(*want) + " samples, found " +
                                  std::to_string(got));
    };
    check("train", expected->train);
    check("val", expected->val);
    check("test", expected->test);
  }
  return report;
}

}  // namespace cdet
