#include "cdet/backbone/registry.hpp"

#include <array>

#include "cdet/backbone/convnext.hpp"
#include "cdet/backbone/resnet.hpp"
#include "cdet/backbone/swin.hpp"
#include "cdet/backbone/vit.hpp"
#include "cdet/backbone/weights.hpp"
#include "cdet/error.hpp"

namespace cdet {

namespace detail {
extern const char* const kBuiltinManifest;
}

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Family, std::string_view>, 5> kFamilies{{
    {Family::swin, "swin"},
    {Family::swinv2, "swinv2"},
    {Family::vit, "vit"},
    {Family::resnet, "resnet"},
    {Family::convnext, "convnext"},
}};

constexpr std::array<std::pair<Pretrain, std::string_view>, 9> kPretrains{{
    {Pretrain::none, "none"},
    {Pretrain::in1k_cls, "in1k-cls"},
    {Pretrain::eurosat_cls, "eurosat-cls"},
    {Pretrain::ade20k_sem, "ade20k-sem"},
    {Pretrain::cityscapes_sem, "cityscapes-sem"},
    {Pretrain::cityscapes_pan, "cityscapes-pan"},
    {Pretrain::cityscapes_inst, "cityscapes-inst"},
    {Pretrain::coco_pan, "coco-pan"},
    {Pretrain::coco_inst, "coco-inst"},
}};

std::array<int64_t, 4> int4(const json& j) {
  auto v = j.get<std::vector<int64_t>>();
  if (v.size() != 4) fail(Errc::invalid_spec, "expected four per-stage values");
  return {v[0], v[1], v[2], v[3]};
}

SwinArch swin_arch(const RegistryEntry& e, const BuildOptions& options) {
  SwinArch a;
  const auto& size = e.spec.size;
  if (e.spec.family == Family::swinv2) {
    if (size != "tiny") fail(Errc::invalid_spec, "unknown SwinV2 size " + size);
    a.version = 2;
    a.window = 8;
  } else if (size == "tiny") {
  } else if (size == "small") {
    a.depths = {2, 2, 18, 2};
  } else if (size == "base") {
    a.embed_dim = 128;
    a.depths = {2, 2, 18, 2};
    a.heads = {4, 8, 16, 32};
  } else if (size == "micro") {
    a.embed_dim = 16;
    a.depths = {1, 1, 1, 1};
    a.heads = {1, 1, 2, 4};
    a.window = 4;
    a.drop_path_rate = 0.0;
  } else {
    fail(Errc::invalid_spec, "unknown Swin size " + size);
  }
  const auto& o = e.arch;
  if (o.contains("window")) a.window = o["window"].get<int64_t>();
  if (o.contains("pretrained_window")) a.pretrained_window = o["pretrained_window"].get<int64_t>();
  if (o.contains("embed_dim")) a.embed_dim = o["embed_dim"].get<int64_t>();
  if (o.contains("depths")) a.depths = int4(o["depths"]);
  if (o.contains("heads")) a.heads = int4(o["heads"]);
  if (options.drop_path_rate) a.drop_path_rate = *options.drop_path_rate;
  return a;
}

}  // namespace

std::string_view to_string(Family family) {
  for (const auto& [f, name] : kFamilies)
    if (f == family) return name;
  return "?";
}

Family parse_family(std::string_view text) {
  for (const auto& [f, name] : kFamilies)
    if (name == text) return f;
  fail(Errc::invalid_spec, "unknown backbone family '" + std::string(text) + "'");
}

std::string_view to_string(Pretrain pretrain) {
  for (const auto& [p, name] : kPretrains)
    if (p == pretrain) return name;
  return "?";
}

Pretrain parse_pretrain(std::string_view text) {
  for (const auto& [p, name] : kPretrains)
    if (name == text) return p;
  fail(Errc::invalid_spec, "unknown pretrain source '" + std::string(text) + "'");
}

std::string BackboneSpec::key() const {
  return std::string(to_string(family)) + "/" + size + "/" + std::string(to_string(pretrain));
}

Registry Registry::from_json(const json& manifest) {
  Registry r;
  try {
    for (const auto& item : manifest.at("backbones")) {
      RegistryEntry e;
      e.spec.family = parse_family(item.at("family").get<std::string>());
      e.spec.size = item.at("size").get<std::string>();
      e.spec.pretrain = parse_pretrain(item.at("pretrain").get<std::string>());
      e.spec.feature_level_ids = item.at("feature_level_ids").get<std::vector<int64_t>>();
      if (e.spec.feature_level_ids.size() != 4)
        fail(Errc::invalid_spec, e.spec.key() + ": exactly four feature levels required");
      if (item.contains("arch")) e.arch = item["arch"];
      e.desk_only = item.value("desk_only", false);
      const auto& w = item.at("weights");
      if (!w.is_null()) {
        WeightSource s;
        s.identifier = w.at("identifier").get<std::string>();
        s.uri = w.at("uri").get<std::string>();
        if (!w.at("sha256").is_null()) s.sha256 = w["sha256"].get<std::string>();
        s.license_note = w.at("license_note").get<std::string>();
        s.key_prefix = w.at("key_prefix").get<std::string>();
        e.weights = s;
      }
      if ((e.spec.pretrain == Pretrain::none) != !e.weights)
        fail(Errc::invalid_spec, e.spec.key() + ": weights must be present exactly when pretrained");
      for (const auto& other : r.entries_) {
        if (other.spec.family == e.spec.family && other.spec.size == e.spec.size &&
            other.spec.pretrain == e.spec.pretrain)
          fail(Errc::invalid_spec, "duplicate manifest row " + e.spec.key());
      }
      r.entries_.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    fail(Errc::invalid_spec, std::string("malformed backbone manifest: ") + ex.what());
  }
  return r;
}

const Registry& Registry::builtin() {
  static const Registry registry = from_json(json::parse(detail::kBuiltinManifest));
  return registry;
}

const RegistryEntry& Registry::find(const BackboneSpec& spec) const {
  for (const auto& e : entries_) {
    if (e.spec.family != spec.family || e.spec.size != spec.size || e.spec.pretrain != spec.pretrain) continue;
    if (!spec.feature_level_ids.empty() && spec.feature_level_ids != e.spec.feature_level_ids)
      fail(Errc::invalid_spec, spec.key() + ": feature levels differ from the manifest");
    return e;
  }
  fail(Errc::invalid_spec, "backbone " + spec.key() + " is not in the registry");
}

std::vector<BackboneSpec> list_backbones() {
  std::vector<BackboneSpec> out;
  for (const auto& e : Registry::builtin().entries()) out.push_back(e.spec);
  return out;
}

Encoder build_architecture(const RegistryEntry& e, const BuildOptions& options) {
  const auto& size = e.spec.size;
  switch (e.spec.family) {
    case Family::swin:
    case Family::swinv2:
      return std::make_shared<SwinEncoderImpl>(swin_arch(e, options));
    case Family::vit: {
      VitArch a;
      if (size == "base") {
        a.embed_dim = 768;
        a.heads = 12;
      } else if (size != "tiny") {
        fail(Errc::invalid_spec, "unknown ViT size " + size);
      }
      const auto& ids = e.spec.feature_level_ids;
      a.taps = {ids[0], ids[1], ids[2], ids[3]};
      if (options.drop_path_rate) a.drop_path_rate = *options.drop_path_rate;
      return std::make_shared<VitEncoderImpl>(a);
    }
    case Family::resnet:
      return std::make_shared<ResNetEncoderImpl>(resnet_arch(std::stoi(size)));
    case Family::convnext: {
      if (size != "base") fail(Errc::invalid_spec, "unknown ConvNeXt size " + size);
      ConvNextArch a;
      if (options.drop_path_rate) a.drop_path_rate = *options.drop_path_rate;
      return std::make_shared<ConvNextEncoderImpl>(a);
    }
  }
  fail(Errc::invalid_spec, "unhandled family");
}

Encoder build_backbone(const BackboneSpec& spec, const BuildOptions& options) {
  const auto& entry = Registry::builtin().find(spec);
  auto encoder = build_architecture(entry, options);
  if (entry.weights) {
    const auto root = options.cache_root.empty() ? weights::default_cache_root() : options.cache_root;
    const auto file = weights::resolve(*entry.weights, root);
    weights::load_encoder(*encoder, file, entry.weights->key_prefix);
  }
  return encoder;
}

std::pair<double, double> default_optimizer(Family family) {
  if (family == Family::vit) return {6e-5, 0.05};
  return {1e-4, 1e-4};
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters(true))
    if (p.requires_grad()) n += p.numel();
  return n;
}

ParamSplit parameter_split(const torch::nn::Module& encoder, const torch::nn::Module& decoder) {
  ParamSplit s;
  s.encoder = count_parameters(encoder);
  s.decoder = count_parameters(decoder);
  s.total = s.encoder + s.decoder;
  return s;
}

}  // namespace cdet
