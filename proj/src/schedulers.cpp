#include "cdet/schedulers.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "cdet/error.hpp"

namespace cdet {

namespace {

constexpr std::array<std::pair<SchedulerKind, std::string_view>, 6> kKinds{{
    {SchedulerKind::none, "none"},
    {SchedulerKind::multistep, "multistep"},
    {SchedulerKind::cosine, "cosine"},
    {SchedulerKind::exponential, "exponential"},
    {SchedulerKind::linear, "linear"},
    {SchedulerKind::polynomial, "polynomial"},
}};

}  // namespace

std::string_view to_string(SchedulerKind kind) {
  for (const auto& [k, name] : kKinds)
    if (k == kind) return name;
  return "?";
}

SchedulerKind parse_scheduler_kind(std::string_view text) {
  for (const auto& [k, name] : kKinds)
    if (name == text) return k;
  fail(Errc::invalid_config, "unknown scheduler kind '" + std::string(text) + "'");
}

void SchedulerConfig::validate() const {
  if (!(base_lr > 0)) fail(Errc::invalid_config, "scheduler.base_lr must be > 0");
  if (total_epochs < 1) fail(Errc::invalid_config, "scheduler.total_epochs must be >= 1");
  if (!(multistep_gamma > 0 && multistep_gamma <= 1)) fail(Errc::invalid_config, "scheduler.multistep_gamma must lie in (0,1]");
  double prev = 0.0;
  for (double m : multistep_milestones) {
    if (!(m > prev && m < 1.0)) fail(Errc::invalid_config, "scheduler.multistep_milestones must increase strictly within (0,1)");
    prev = m;
  }
  if (!(exp_gamma > 0 && exp_gamma <= 1)) fail(Errc::invalid_config, "scheduler.exp_gamma must lie in (0,1]");
  if (poly_power < 0) fail(Errc::invalid_config, "scheduler.poly_power must be >= 0");
  if (min_lr < 0 || min_lr > base_lr) fail(Errc::invalid_config, "scheduler.min_lr must lie in [0, base_lr]");
}

std::vector<int> milestone_epochs(const SchedulerConfig& c) {
  std::vector<int> out;
  for (double m : c.multistep_milestones) out.push_back(static_cast<int>(std::ceil(m * c.total_epochs)));
  return out;
}

double lr_at(const SchedulerConfig& c, int epoch) {
  if (epoch < 0 || epoch >= c.total_epochs)
    fail(Errc::invalid_argument, "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.total_epochs) + ")");
  const double t = static_cast<double>(epoch) / c.total_epochs;
  switch (c.kind) {
    case SchedulerKind::none:
      return c.base_lr;
    case SchedulerKind::multistep: {
      double lr = c.base_lr;
      for (int m : milestone_epochs(c))
        if (epoch >= m) lr *= c.multistep_gamma;
      return lr;
    }
    case SchedulerKind::cosine:
      return c.min_lr + (c.base_lr - c.min_lr) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
    case SchedulerKind::exponential:
      return c.base_lr * std::pow(c.exp_gamma, epoch);
    case SchedulerKind::linear:
      return std::max(c.min_lr, c.base_lr * (1.0 - t));
    case SchedulerKind::polynomial:
      return std::max(c.min_lr, c.base_lr * std::pow(1.0 - t, c.poly_power));
  }
  fail(Errc::invalid_config, "unknown scheduler kind");
}

}  // namespace cdet
