#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdet/backbone/registry.hpp"
#include "cdet/data/augment.hpp"
#include "cdet/data/dataset.hpp"
#include "cdet/losses.hpp"
#include "cdet/model/upernet.hpp"
#include "cdet/schedulers.hpp"

namespace cdet {

struct OptimizerConfig {
  std::string algorithm = "adamw";
  std::optional<double> lr;            // empty: family default
  std::optional<double> weight_decay;  // empty: family default
  std::pair<double, double> betas{0.9, 0.999};
  double eps = 1e-8;
};

/// Scheduler fields that are not derived from the optimizer and epochs.
struct ScheduleShape {
  SchedulerKind kind = SchedulerKind::none;
  double multistep_gamma = 0.5;
  std::vector<double> multistep_milestones{0.8, 0.9};
  double exp_gamma = 0.95;
  double poly_power = 0.9;
  double min_lr = 0.0;
};

struct RuntimeConfig {
  bool deterministic = true;
  bool evaluate_train = false;  // also score the training split after the last epoch
  int threads = 0;              // 0: library default
};

struct ExperimentConfig {
  std::string name = "custom";
  BackboneSpec backbone;
  std::optional<double> drop_path_rate;
  DecoderConfig decoder;
  double threshold = 0.5;
  AugmentationConfig augmentation;
  LossConfig loss;
  ScheduleShape scheduler;
  OptimizerConfig optimizer;
  DatasetSpec dataset;
  std::optional<int> epochs;  // empty: 100, or 50 for OSCD
  int batch_size = 32;
  std::vector<uint64_t> seeds{0, 1, 2};
  bool freeze_backbone = false;
  RuntimeConfig runtime;

  /// Throws invalid-config (or invalid-spec for unknown backbones).
  void validate() const;

  int effective_epochs() const;
  double effective_lr() const;
  double effective_weight_decay() const;
  SchedulerConfig scheduler_config() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Strict: unknown keys and wrong types are invalid-config with the field path.
/// Absent keys keep the defaults of `base`.
ExperimentConfig from_json(const nlohmann::json& j, const ExperimentConfig& base = {});

ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const std::string& path, const ExperimentConfig& config);

/// `a.b.c=value`; value parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);
ExperimentConfig with_overrides(const ExperimentConfig& config, const std::vector<std::string>& assignments);

/// Short hex digest of the canonical config with seeds removed.
std::string config_hash(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// invalid-config for unknown names.
ExperimentConfig preset(const std::string& name);

}  // namespace cdet
