#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdet/backbone/encoder.hpp"

namespace cdet {

enum class Family { swin, swinv2, vit, resnet, convnext };

enum class Pretrain {
  none,
  in1k_cls,
  eurosat_cls,
  ade20k_sem,
  cityscapes_sem,
  cityscapes_pan,
  cityscapes_inst,
  coco_pan,
  coco_inst,
};

std::string_view to_string(Family family);
Family parse_family(std::string_view text);
std::string_view to_string(Pretrain pretrain);  // "none", "in1k-cls", "cityscapes-sem", ...
Pretrain parse_pretrain(std::string_view text);

struct BackboneSpec {
  Family family = Family::swin;
  std::string size = "tiny";
  Pretrain pretrain = Pretrain::in1k_cls;
  std::vector<int64_t> feature_level_ids;  // empty: manifest default

  std::string key() const;  // "swin/tiny/in1k-cls"
  bool operator==(const BackboneSpec&) const = default;
};

struct WeightSource {
  std::string identifier;
  std::string uri;
  std::optional<std::string> sha256;  // null in the manifest: pinned on first fetch
  std::string license_note;
  std::string key_prefix;  // stripped from checkpoint names before matching
};

struct RegistryEntry {
  BackboneSpec spec;
  nlohmann::json arch = nlohmann::json::object();  // overrides of the family/size defaults
  std::optional<WeightSource> weights;
  bool desk_only = false;
};

class Registry {
 public:
  static const Registry& builtin();
  static Registry from_json(const nlohmann::json& manifest);

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  /// Throws invalid-spec for triples outside the manifest.
  const RegistryEntry& find(const BackboneSpec& spec) const;

 private:
  std::vector<RegistryEntry> entries_;
};

std::vector<BackboneSpec> list_backbones();

struct BuildOptions {
  std::filesystem::path cache_root;       // empty: weights::default_cache_root()
  std::optional<double> drop_path_rate;   // empty: family default
};

/// Constructs the encoder; pretrained entries load verified cached weights.
Encoder build_backbone(const BackboneSpec& spec, const BuildOptions& options = {});
/// Random-init encoder of the entry's architecture, no weight loading.
Encoder build_architecture(const RegistryEntry& entry, const BuildOptions& options = {});

/// Family-specific optimizer defaults (lr, weight decay).
std::pair<double, double> default_optimizer(Family family);

struct ParamSplit {
  int64_t encoder = 0;
  int64_t decoder = 0;
  int64_t total = 0;
};

int64_t count_parameters(const torch::nn::Module& module);
ParamSplit parameter_split(const torch::nn::Module& encoder, const torch::nn::Module& decoder);

}  // namespace cdet
