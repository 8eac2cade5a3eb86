#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cdet/data/types.hpp"

namespace cdet {

enum class DatasetName { SYSU, LEVIR, EGYBCD, GVLM, CLCD, OSCD, SYNTHETIC };

std::string_view to_string(DatasetName name);
DatasetName parse_dataset_name(std::string_view text);

/// Generator settings used when a SYNTHETIC dataset has no on-disk root.
struct SyntheticSpec {
  int64_t n_train = 64;
  int64_t n_val = 0;
  int64_t n_test = 16;
  double change_ratio = 0.05;
  uint64_t seed = 0;
};

struct DatasetSpec {
  DatasetName name = DatasetName::SYNTHETIC;
  std::filesystem::path root;
  int64_t patch_size = 256;
  std::optional<int64_t> resize_to;
  SyntheticSpec synthetic;

  /// Throws invalid-config when patch/resize disagree with the published layout.
  void validate() const;
};

/// Published patch geometry: 256 for all except OSCD (96, rescaled to 256).
DatasetSpec default_dataset_spec(DatasetName name, std::filesystem::path root = {});

struct SplitCounts {
  int64_t train = 0;
  std::optional<int64_t> val;
  int64_t test = 0;
};

/// Published train/val/test sizes for the six benchmark datasets.
std::optional<SplitCounts> expected_counts(DatasetName name);
bool has_split(DatasetName name, Split split);

/// Random-access view over one split. Disk-backed splits decode lazily.
class Dataset {
 public:
  Dataset(DatasetSpec spec, Split split, std::vector<std::string> ids);
  Dataset(DatasetSpec spec, Split split, std::vector<Sample> samples);

  size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const DatasetSpec& spec() const { return spec_; }
  Split split() const { return split_; }

  /// Raw sample: images in [0,1], binary mask, dimensions validated.
  Sample get(size_t index) const;
  std::optional<size_t> find(const std::string& sample_id) const;

 private:
  DatasetSpec spec_;
  Split split_;
  std::vector<std::string> ids_;
  std::shared_ptr<const std::vector<Sample>> in_memory_;
};

/// Opens <root>/<split>/{A,B,label}/ or the in-memory synthetic generator.
Dataset open_dataset(const DatasetSpec& spec, Split split);

/// Every sample of the split in lexicographic sample_id order.
std::vector<Sample> load_dataset(const DatasetSpec& spec, Split split);

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

torch::Tensor normalize(const torch::Tensor& chw);
torch::Tensor denormalize(const torch::Tensor& chw);

/// ImageNet normalization, then optional bilinear (images) / nearest (mask)
/// resize to spec.resize_to.
Sample preprocess(const Sample& sample, const DatasetSpec& spec);

}  // namespace cdet
