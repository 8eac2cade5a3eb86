#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include <torch/torch.h>

namespace cdet {

enum class LossKind { ce, focal, dice, focal_dice, ce_dice };

std::string_view to_string(LossKind kind);  // "ce", "focal", "dice", "focal+dice", "ce+dice"
LossKind parse_loss_kind(std::string_view text);

struct LossConfig {
  LossKind kind = LossKind::ce;
  double focal_gamma = 2.0;
  std::optional<double> focal_alpha;
  double dice_smooth = 1.0;
  std::pair<double, double> combo_weights{1.0, 1.0};

  void validate() const;
};

inline constexpr double kProbEpsilon = 1e-7;

// Probability-space losses. `prob` and `gt` share a shape; gt holds 0/1.
// Log terms use prob clamped to [eps, 1-eps]; Dice uses prob unclamped.
torch::Tensor ce_loss(const torch::Tensor& prob, const torch::Tensor& gt);
torch::Tensor focal_loss(const torch::Tensor& prob, const torch::Tensor& gt, double gamma,
                         std::optional<double> alpha = std::nullopt);
torch::Tensor dice_loss(const torch::Tensor& prob, const torch::Tensor& gt, double smooth = 1.0);
torch::Tensor combined_loss(const LossConfig& config, const torch::Tensor& prob, const torch::Tensor& gt);

/// Same losses evaluated from logits with log-sigmoid, used in training.
torch::Tensor combined_loss_from_logits(const LossConfig& config, const torch::Tensor& logits, const torch::Tensor& gt);

}  // namespace cdet
