#pragma once

#include <string_view>
#include <vector>

namespace cdet {

enum class SchedulerKind { none, multistep, cosine, exponential, linear, polynomial };

std::string_view to_string(SchedulerKind kind);
SchedulerKind parse_scheduler_kind(std::string_view text);

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::none;
  double base_lr = 1e-4;
  int total_epochs = 100;
  double multistep_gamma = 0.5;
  std::vector<double> multistep_milestones{0.8, 0.9};  // fractions of total_epochs
  double exp_gamma = 0.95;
  double poly_power = 0.9;
  double min_lr = 0.0;

  void validate() const;
};

/// Learning rate used throughout `epoch`, stepped once per epoch.
double lr_at(const SchedulerConfig& config, int epoch);

/// Epoch index of each multistep milestone: ceil(fraction * total_epochs).
std::vector<int> milestone_epochs(const SchedulerConfig& config);

}  // namespace cdet
