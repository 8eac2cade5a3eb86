#include "cdet/data/dataset.hpp"

#include <algorithm>

#include "cdet/data/synthetic.hpp"
#include "cdet/error.hpp"
#include "cdet/io/image_io.hpp"
#include "cdet/random.hpp"

namespace cdet {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::SYSU: return "SYSU";
    case DatasetName::LEVIR: return "LEVIR";
    case DatasetName::EGYBCD: return "EGYBCD";
    case DatasetName::GVLM: return "GVLM";
    case DatasetName::CLCD: return "CLCD";
    case DatasetName::OSCD: return "OSCD";
    case DatasetName::SYNTHETIC: return "SYNTHETIC";
  }
  return "SYNTHETIC";
}

DatasetName parse_dataset_name(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "EGY-BCD" || upper == "EGY_BCD") upper = "EGYBCD";
  for (auto n : {DatasetName::SYSU, DatasetName::LEVIR, DatasetName::EGYBCD, DatasetName::GVLM,
                 DatasetName::CLCD, DatasetName::OSCD, DatasetName::SYNTHETIC})
    if (upper == to_string(n)) return n;
  fail(Errc::invalid_config, "unknown dataset '" + std::string(text) + "'");
}

DatasetSpec default_dataset_spec(DatasetName name, fs::path root) {
  DatasetSpec spec;
  spec.name = name;
  spec.root = std::move(root);
  if (name == DatasetName::OSCD) {
    spec.patch_size = 96;
    spec.resize_to = 256;
  }
  return spec;
}

void DatasetSpec::validate() const {
  if (patch_size < 1) fail(Errc::invalid_config, "dataset.patch_size must be positive");
  if (resize_to && *resize_to < 1) fail(Errc::invalid_config, "dataset.resize_to must be positive");
  if (name == DatasetName::SYNTHETIC) {
    if (synthetic.change_ratio <= 0.0 || synthetic.change_ratio >= 1.0)
      fail(Errc::invalid_config, "dataset.synthetic.change_ratio must lie in (0,1)");
    if (synthetic.n_train < 0 || synthetic.n_val < 0 || synthetic.n_test < 0)
      fail(Errc::invalid_config, "dataset.synthetic counts must be non-negative");
    return;
  }
  const auto expected = default_dataset_spec(name);
  if (patch_size != expected.patch_size || resize_to != expected.resize_to)
    fail(Errc::invalid_config, "dataset " + std::string(to_string(name)) +
                                   " requires patch_size " + std::to_string(expected.patch_size) +
                                   (expected.resize_to ? " and resize_to " + std::to_string(*expected.resize_to)
                                                       : std::string(" without resize")));
}

std::optional<SplitCounts> expected_counts(DatasetName name) {
  switch (name) {
    case DatasetName::SYSU: return SplitCounts{12000, 4000, 4000};
    case DatasetName::LEVIR: return SplitCounts{7120, 1024, 2048};
    case DatasetName::EGYBCD: return SplitCounts{3654, 1219, 1218};
    case DatasetName::GVLM: return SplitCounts{4558, 1519, 1519};
    case DatasetName::CLCD: return SplitCounts{1440, 480, 480};
    case DatasetName::OSCD: return SplitCounts{827, std::nullopt, 385};
    case DatasetName::SYNTHETIC: return std::nullopt;
  }
  return std::nullopt;
}

bool has_split(DatasetName name, Split split) {
  return !(name == DatasetName::OSCD && split == Split::val);
}

Dataset::Dataset(DatasetSpec spec, Split split, std::vector<std::string> ids)
    : spec_(std::move(spec)), split_(split), ids_(std::move(ids)) {}

Dataset::Dataset(DatasetSpec spec, Split split, std::vector<Sample> samples)
    : spec_(std::move(spec)), split_(split) {
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.pair.sample_id < b.pair.sample_id; });
  for (const auto& s : samples) ids_.push_back(s.pair.sample_id);
  in_memory_ = std::make_shared<const std::vector<Sample>>(std::move(samples));
}

Sample Dataset::get(size_t index) const {
  if (index >= ids_.size()) fail(Errc::invalid_argument, "sample index out of range");
  if (in_memory_) return (*in_memory_)[index];

  const auto& id = ids_[index];
  const fs::path dir = spec_.root / std::string(to_string(split_));
  Sample s;
  s.split = split_;
  s.pair.sample_id = id;
  s.pair.pre = io::read_rgb(dir / "A" / (id + ".png"));
  s.pair.post = io::read_rgb(dir / "B" / (id + ".png"));
  s.gt = io::read_label(dir / "label" / (id + ".png"));
  if (s.pair.pre.sizes() != s.pair.post.sizes() || s.gt.height() != s.pair.pre.size(1) ||
      s.gt.width() != s.pair.pre.size(2))
    fail(Errc::corrupt_sample, "sample '" + id + "': pre/post/mask dimensions differ");
  if (s.pair.pre.size(1) != spec_.patch_size || s.pair.pre.size(2) != spec_.patch_size)
    fail(Errc::corrupt_sample, "sample '" + id + "': expected " + std::to_string(spec_.patch_size) +
                                   "x" + std::to_string(spec_.patch_size) + " patch");
  return s;
}

std::optional<size_t> Dataset::find(const std::string& sample_id) const {
  auto it = std::find(ids_.begin(), ids_.end(), sample_id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<size_t>(it - ids_.begin());
}

namespace {

int64_t synthetic_count(const SyntheticSpec& syn, Split split) {
  switch (split) {
    case Split::train: return syn.n_train;
    case Split::val: return syn.n_val;
    case Split::test: return syn.n_test;
  }
  return 0;
}

std::vector<std::string> list_ids(const fs::path& dir) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

Dataset open_dataset(const DatasetSpec& spec, Split split) {
  spec.validate();
  if (!has_split(spec.name, split))
    fail(Errc::invalid_split, std::string(to_string(spec.name)) + " has no " +
                                  std::string(to_string(split)) + " split");

  if (spec.name == DatasetName::SYNTHETIC && spec.root.empty()) {
    const auto n = synthetic_count(spec.synthetic, split);
    const auto split_seed = derive_seed(spec.synthetic.seed, to_string(split));
    auto samples = n > 0 ? make_synthetic_dataset(n, spec.synthetic.change_ratio, spec.patch_size,
                                                  split_seed, split)
                         : std::vector<Sample>{};
    return Dataset(spec, split, std::move(samples));
  }

  const fs::path dir = spec.root / std::string(to_string(split));
  if (!fs::is_directory(spec.root) || !fs::is_directory(dir))
    fail(Errc::dataset_not_found, "missing directory '" + dir.string() + "'");
  for (const char* sub : {"A", "B", "label"})
    if (!fs::is_directory(dir / sub))
      fail(Errc::dataset_not_found, "missing directory '" + (dir / sub).string() + "'");

  auto ids = list_ids(dir / "A");
  for (const auto& id : ids)
    for (const char* sub : {"B", "label"})
      if (!fs::exists(dir / sub / (id + ".png")))
        fail(Errc::corrupt_sample, "sample '" + id + "': missing " + std::string(sub) + " file");
  return Dataset(spec, split, std::move(ids));
}

std::vector<Sample> load_dataset(const DatasetSpec& spec, Split split) {
  auto ds = open_dataset(spec, split);
  std::vector<Sample> out;
  out.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) out.push_back(ds.get(i));
  return out;
}

torch::Tensor normalize(const torch::Tensor& chw) {
  auto mean = torch::tensor(std::vector<float>(kImageNetMean.begin(), kImageNetMean.end())).view({3, 1, 1});
  auto std = torch::tensor(std::vector<float>(kImageNetStd.begin(), kImageNetStd.end())).view({3, 1, 1});
  return (chw - mean) / std;
}

torch::Tensor denormalize(const torch::Tensor& chw) {
  auto mean = torch::tensor(std::vector<float>(kImageNetMean.begin(), kImageNetMean.end())).view({3, 1, 1});
  auto std = torch::tensor(std::vector<float>(kImageNetStd.begin(), kImageNetStd.end())).view({3, 1, 1});
  return chw * std + mean;
}

Sample preprocess(const Sample& sample, const DatasetSpec& spec) {
  sample.check();
  if (sample.pair.height() != spec.patch_size || sample.pair.width() != spec.patch_size)
    fail(Errc::corrupt_sample, "sample '" + sample.pair.sample_id + "': expected " +
                                   std::to_string(spec.patch_size) + " pixel patch");
  Sample out = sample;
  if (!out.pair.normalized) {
    out.pair.pre = normalize(out.pair.pre);
    out.pair.post = normalize(out.pair.post);
    out.pair.normalized = true;
  }
  if (spec.resize_to && *spec.resize_to != spec.patch_size) {
    const std::vector<int64_t> size{*spec.resize_to, *spec.resize_to};
    auto bilinear = F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false);
    out.pair.pre = F::interpolate(out.pair.pre.unsqueeze(0), bilinear).squeeze(0);
    out.pair.post = F::interpolate(out.pair.post.unsqueeze(0), bilinear).squeeze(0);
    auto nearest = F::InterpolateFuncOptions().size(size).mode(torch::kNearest);
    auto m = out.gt.tensor().to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
    out.gt = ChangeMask::from_tensor(F::interpolate(m, nearest).squeeze(0).squeeze(0).round());
  }
  return out;
}

}  // namespace cdet
