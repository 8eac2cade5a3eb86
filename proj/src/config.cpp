#include "cdet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cdet/error.hpp"
#include "cdet/io/sha256.hpp"

namespace cdet {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(Errc::invalid_config, where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(Errc::invalid_config, field(key) + " has the wrong type");
    }
  }

  template <class T>
  void get_opt(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  template <class Fn>
  void get_enum(const char* key, Fn&& parse) {
    std::optional<std::string> text;
    get_opt(key, text);
    if (!text) return;
    try {
      parse(*text);
    } catch (const Error& e) {
      fail(Errc::invalid_config, field(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) fail(Errc::invalid_config, "unknown key " + field(item.key()));
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json interval(const Interval& r) { return json::array({r.first, r.second}); }

template <class T>
json nullable(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

int ExperimentConfig::effective_epochs() const {
  if (epochs) return *epochs;
  return dataset.name == DatasetName::OSCD ? 50 : 100;
}

double ExperimentConfig::effective_lr() const {
  return optimizer.lr.value_or(default_optimizer(backbone.family).first);
}

double ExperimentConfig::effective_weight_decay() const {
  return optimizer.weight_decay.value_or(default_optimizer(backbone.family).second);
}

SchedulerConfig ExperimentConfig::scheduler_config() const {
  SchedulerConfig s;
  s.kind = scheduler.kind;
  s.base_lr = effective_lr();
  s.total_epochs = effective_epochs();
  s.multistep_gamma = scheduler.multistep_gamma;
  s.multistep_milestones = scheduler.multistep_milestones;
  s.exp_gamma = scheduler.exp_gamma;
  s.poly_power = scheduler.poly_power;
  s.min_lr = scheduler.min_lr;
  return s;
}

void ExperimentConfig::validate() const {
  if (freeze_backbone)
    fail(Errc::invalid_config, "freeze_backbone: the protocol optimizes every parameter; the backbone is never frozen");
  Registry::builtin().find(backbone);
  if (drop_path_rate && (*drop_path_rate < 0 || *drop_path_rate >= 1))
    fail(Errc::invalid_config, "drop_path_rate must lie in [0,1)");
  if (decoder.channels < 1) fail(Errc::invalid_config, "decoder.channels must be positive");
  for (auto s : decoder.pool_scales)
    if (s < 1) fail(Errc::invalid_config, "decoder.pool_scales must be positive");
  if (decoder.dropout < 0 || decoder.dropout >= 1) fail(Errc::invalid_config, "decoder.dropout must lie in [0,1)");
  if (!(threshold > 0 && threshold < 1)) fail(Errc::invalid_config, "threshold must lie in (0,1)");
  augmentation.validate();
  loss.validate();
  if (optimizer.algorithm != "adamw") fail(Errc::invalid_config, "optimizer.algorithm must be adamw");
  if (optimizer.lr && !(*optimizer.lr > 0)) fail(Errc::invalid_config, "optimizer.lr must be > 0");
  if (optimizer.weight_decay && *optimizer.weight_decay < 0)
    fail(Errc::invalid_config, "optimizer.weight_decay must be >= 0");
  dataset.validate();
  if (epochs && *epochs < 1) fail(Errc::invalid_config, "epochs must be >= 1");
  if (batch_size < 1) fail(Errc::invalid_config, "batch_size must be >= 1");
  if (seeds.empty()) fail(Errc::invalid_config, "seeds must list at least one seed");
  if (runtime.threads < 0) fail(Errc::invalid_config, "runtime.threads must be >= 0");
  scheduler_config().validate();
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["backbone"] = {{"family", to_string(c.backbone.family)},
                   {"size", c.backbone.size},
                   {"pretrain", to_string(c.backbone.pretrain)},
                   {"feature_level_ids", c.backbone.feature_level_ids}};
  j["drop_path_rate"] = nullable(c.drop_path_rate);
  j["decoder"] = {{"channels", c.decoder.channels},
                  {"pool_scales", c.decoder.pool_scales},
                  {"dropout", c.decoder.dropout}};
  j["threshold"] = c.threshold;
  const auto& a = c.augmentation;
  j["augmentation"] = {{"flip", a.enable_flip},
                       {"crop", a.enable_crop},
                       {"color", a.enable_color},
                       {"blur", a.enable_blur},
                       {"probability", a.probability},
                       {"crop_ratio_range", interval(a.crop_ratio_range)},
                       {"rotation_range_deg", interval(a.rotation_range_deg)},
                       {"color_factor_range", interval(a.color_factor_range)},
                       {"hue_range", interval(a.hue_range)},
                       {"blur_kernel_choices", a.blur_kernel_choices}};
  const auto& l = c.loss;
  j["loss"] = {{"kind", to_string(l.kind)},
               {"focal_gamma", l.focal_gamma},
               {"focal_alpha", nullable(l.focal_alpha)},
               {"dice_smooth", l.dice_smooth},
               {"combo_weights", json::array({l.combo_weights.first, l.combo_weights.second})}};
  const auto& s = c.scheduler;
  j["scheduler"] = {{"kind", to_string(s.kind)},
                    {"multistep_gamma", s.multistep_gamma},
                    {"multistep_milestones", s.multistep_milestones},
                    {"exp_gamma", s.exp_gamma},
                    {"poly_power", s.poly_power},
                    {"min_lr", s.min_lr}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"algorithm", o.algorithm},
                    {"lr", nullable(o.lr)},
                    {"weight_decay", nullable(o.weight_decay)},
                    {"betas", json::array({o.betas.first, o.betas.second})},
                    {"eps", o.eps}};
  const auto& d = c.dataset;
  j["dataset"] = {{"name", to_string(d.name)},
                  {"root", d.root.string()},
                  {"patch_size", d.patch_size},
                  {"resize_to", nullable(d.resize_to)},
                  {"synthetic",
                   {{"n_train", d.synthetic.n_train},
                    {"n_val", d.synthetic.n_val},
                    {"n_test", d.synthetic.n_test},
                    {"change_ratio", d.synthetic.change_ratio},
                    {"seed", d.synthetic.seed}}}};
  j["epochs"] = nullable(c.epochs);
  j["batch_size"] = c.batch_size;
  j["seeds"] = c.seeds;
  j["freeze_backbone"] = c.freeze_backbone;
  j["runtime"] = {{"deterministic", c.runtime.deterministic},
                  {"evaluate_train", c.runtime.evaluate_train},
                  {"threads", c.runtime.threads}};
  return j;
}

ExperimentConfig from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  Reader r(j, "");
  r.get("name", c.name);
  if (r.has("backbone")) {
    auto b = r.child("backbone");
    b.get_enum("family", [&](const std::string& t) { c.backbone.family = parse_family(t); });
    b.get("size", c.backbone.size);
    b.get_enum("pretrain", [&](const std::string& t) { c.backbone.pretrain = parse_pretrain(t); });
    b.get("feature_level_ids", c.backbone.feature_level_ids);
    b.finish();
  }
  r.get_opt("drop_path_rate", c.drop_path_rate);
  if (r.has("decoder")) {
    auto d = r.child("decoder");
    d.get("channels", c.decoder.channels);
    d.get("pool_scales", c.decoder.pool_scales);
    d.get("dropout", c.decoder.dropout);
    d.finish();
  }
  r.get("threshold", c.threshold);
  if (r.has("augmentation")) {
    auto a = r.child("augmentation");
    auto& x = c.augmentation;
    a.get("flip", x.enable_flip);
    a.get("crop", x.enable_crop);
    a.get("color", x.enable_color);
    a.get("blur", x.enable_blur);
    a.get("probability", x.probability);
    a.get("crop_ratio_range", x.crop_ratio_range);
    a.get("rotation_range_deg", x.rotation_range_deg);
    a.get("color_factor_range", x.color_factor_range);
    a.get("hue_range", x.hue_range);
    a.get("blur_kernel_choices", x.blur_kernel_choices);
    a.finish();
  }
  if (r.has("loss")) {
    auto l = r.child("loss");
    l.get_enum("kind", [&](const std::string& t) { c.loss.kind = parse_loss_kind(t); });
    l.get("focal_gamma", c.loss.focal_gamma);
    l.get_opt("focal_alpha", c.loss.focal_alpha);
    l.get("dice_smooth", c.loss.dice_smooth);
    l.get("combo_weights", c.loss.combo_weights);
    l.finish();
  }
  if (r.has("scheduler")) {
    auto s = r.child("scheduler");
    s.get_enum("kind", [&](const std::string& t) { c.scheduler.kind = parse_scheduler_kind(t); });
    s.get("multistep_gamma", c.scheduler.multistep_gamma);
    s.get("multistep_milestones", c.scheduler.multistep_milestones);
    s.get("exp_gamma", c.scheduler.exp_gamma);
    s.get("poly_power", c.scheduler.poly_power);
    s.get("min_lr", c.scheduler.min_lr);
    s.finish();
  }
  if (r.has("optimizer")) {
    auto o = r.child("optimizer");
    o.get("algorithm", c.optimizer.algorithm);
    o.get_opt("lr", c.optimizer.lr);
    o.get_opt("weight_decay", c.optimizer.weight_decay);
    o.get("betas", c.optimizer.betas);
    o.get("eps", c.optimizer.eps);
    o.finish();
  }
  if (r.has("dataset")) {
    auto d = r.child("dataset");
    bool name_given = false;
    d.get_enum("name", [&](const std::string& t) {
      const auto name = parse_dataset_name(t);
      name_given = name != c.dataset.name;
      c.dataset.name = name;
    });
    // A changed dataset name brings its published geometry unless given explicitly.
    if (name_given) {
      const auto def = default_dataset_spec(c.dataset.name);
      c.dataset.patch_size = def.patch_size;
      c.dataset.resize_to = def.resize_to;
    }
    std::string root = c.dataset.root.string();
    d.get("root", root);
    c.dataset.root = root;
    d.get("patch_size", c.dataset.patch_size);
    d.get_opt("resize_to", c.dataset.resize_to);
    if (d.has("synthetic")) {
      auto s = d.child("synthetic");
      s.get("n_train", c.dataset.synthetic.n_train);
      s.get("n_val", c.dataset.synthetic.n_val);
      s.get("n_test", c.dataset.synthetic.n_test);
      s.get("change_ratio", c.dataset.synthetic.change_ratio);
      s.get("seed", c.dataset.synthetic.seed);
      s.finish();
    }
    d.finish();
  }
  r.get_opt("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("seeds", c.seeds);
  r.get("freeze_backbone", c.freeze_backbone);
  if (r.has("runtime")) {
    auto t = r.child("runtime");
    t.get("deterministic", c.runtime.deterministic);
    t.get("evaluate_train", c.runtime.evaluate_train);
    t.get("threads", c.runtime.threads);
    t.finish();
  }
  r.finish();
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    fail(Errc::invalid_config, path + ": " + e.what());
  }
  ExperimentConfig base;
  if (j.is_object() && j.contains("preset")) {
    if (!j["preset"].is_string()) fail(Errc::invalid_config, "preset must be a string");
    base = preset(j["preset"].get<std::string>());
    j.erase("preset");
  }
  return from_json(j, base);
}

void save_config_file(const std::string& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  out << to_json(config).dump(2) << "\n";
  if (!out) fail(Errc::io_error, "cannot write config " + path);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(Errc::invalid_config, "override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) fail(Errc::invalid_config, "override path " + key + " crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) fail(Errc::invalid_config, "override path " + key + " crosses a non-object");
  (*node)[parts.back()] = value;
}

ExperimentConfig with_overrides(const ExperimentConfig& config, const std::vector<std::string>& assignments) {
  if (assignments.empty()) return config;
  auto j = to_json(config);
  // A dataset name override must bring the published patch geometry along.
  json patch = json::object();
  for (const auto& a : assignments) apply_override(patch, a);
  if (patch.contains("dataset") && patch["dataset"].contains("name")) {
    j["dataset"].erase("patch_size");
    j["dataset"].erase("resize_to");
  }
  for (const auto& a : assignments) apply_override(j, a);
  ExperimentConfig base;
  if (patch.contains("dataset") && patch["dataset"].contains("name") && patch["dataset"]["name"].is_string()) {
    base.dataset = default_dataset_spec(parse_dataset_name(patch["dataset"]["name"].get<std::string>()));
  }
  return from_json(j, base);
}

std::string config_hash(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("seeds");
  j.erase("name");
  return io::sha256_hex(j.dump()).substr(0, 16);
}

std::vector<std::string> preset_names() {
  return {"baseline",        "btc-t",           "btc-b",           "combined-step1", "combined-step2",
          "combined-step3",  "combined-step4",  "combined-step5",  "combined-step6"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;  // baseline: Swin-T, IN1k, CE, no scheduler, no augmentation
  c.name = name;
  c.backbone = {Family::swin, "tiny", Pretrain::in1k_cls, {}};
  if (name == "baseline" || name == "combined-step2") return c;

  auto step = [&](int n) {
    if (n == 1) c.backbone.pretrain = Pretrain::none;
    if (n >= 3) c.augmentation.enable_flip = true;
    if (n >= 4) c.backbone.pretrain = Pretrain::cityscapes_sem;
    if (n >= 5) c.scheduler.kind = SchedulerKind::cosine;
    if (n >= 6) c.backbone.size = "base";
  };
  for (int n : {1, 3, 4, 5, 6}) {
    if (name == "combined-step" + std::to_string(n)) {
      step(n);
      return c;
    }
  }
  if (name == "btc-t") {
    step(5);
    c.loss.kind = LossKind::dice;
    return c;
  }
  if (name == "btc-b") {
    step(6);
    c.loss.kind = LossKind::dice;
    return c;
  }
  fail(Errc::invalid_config, "unknown preset '" + name + "'");
}

}  // namespace cdet
