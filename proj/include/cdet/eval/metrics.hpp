#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "cdet/data/types.hpp"

namespace cdet {

struct ConfusionCounts {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Adds the pixelwise confusion of one prediction. shape-error on size
/// mismatch; masks are binary by construction.
ConfusionCounts accumulate(ConfusionCounts counts, const ChangeMask& pred, const ChangeMask& gt);
/// Same for raw uint8/bool/int tensors of any shape; invalid-mask for
/// values outside {0,1}.
ConfusionCounts accumulate(ConfusionCounts counts, const torch::Tensor& pred, const torch::Tensor& gt);

/// 2tp / (2tp + fp + fn); 1.0 when the denominator is zero.
double binary_f1(const ConfusionCounts& c);
bool zero_denominator(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);  // 1.0 when nothing predicted
double recall(const ConfusionCounts& c);     // 1.0 when nothing to find
/// Mean of change-class and unchanged-class F1. Inflated under class
/// imbalance; not comparable with binary_f1.
double mean_f1_two_class(const ConfusionCounts& c);

struct MetricsReport {
  ConfusionCounts counts;
  double precision = 0, recall = 0, f1 = 0, mf1 = 0;
  bool zero_denominator_flag = false;
  std::vector<double> per_seed;
  std::optional<double> mean, std;
  bool single_sample_flag = false;

  static MetricsReport from_counts(const ConfusionCounts& counts);
};

/// Unweighted mean and sample std of f1 across reports (seeds or datasets).
/// invalid-argument for an empty list; one report gives std 0, flagged.
MetricsReport aggregate(const std::vector<MetricsReport>& reports);

double mean_of(const std::vector<double>& values);
double sample_std(const std::vector<double>& values);  // 0 for fewer than two values

/// metrics.json schema: tp, fp, fn, tn, precision, recall, f1, mf1,
/// zero_denominator_flag (+ per_seed/mean/std when aggregated).
nlohmann::json to_json(const MetricsReport& report);

}  // namespace cdet
