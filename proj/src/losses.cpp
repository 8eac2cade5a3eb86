#include "cdet/losses.hpp"

#include <array>

#include "cdet/error.hpp"

namespace cdet {

namespace {

constexpr std::array<std::pair<LossKind, std::string_view>, 5> kKinds{{
    {LossKind::ce, "ce"},
    {LossKind::focal, "focal"},
    {LossKind::dice, "dice"},
    {LossKind::focal_dice, "focal+dice"},
    {LossKind::ce_dice, "ce+dice"},
}};

// log p, log(1-p) and p for one prediction.
struct Terms {
  torch::Tensor log_p, log_q, p;
};

Terms from_prob(const torch::Tensor& prob) {
  auto c = prob.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  return {torch::log(c), torch::log1p(-c), prob};
}

Terms from_logits(const torch::Tensor& logits) {
  return {torch::log_sigmoid(logits), torch::log_sigmoid(-logits), torch::sigmoid(logits)};
}

void check_shapes(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes())
    fail(Errc::shape_error, "prediction " + c10::str(pred.sizes()) + " and target " + c10::str(gt.sizes()) + " differ");
}

torch::Tensor ce(const Terms& t, const torch::Tensor& y) {
  return -(y * t.log_p + (1 - y) * t.log_q).mean();
}

torch::Tensor focal(const Terms& t, const torch::Tensor& y, double gamma, std::optional<double> alpha) {
  auto log_pt = y * t.log_p + (1 - y) * t.log_q;
  auto pt = torch::exp(log_pt);
  auto loss = -torch::pow(1 - pt, gamma) * log_pt;
  if (alpha) loss = loss * (y * *alpha + (1 - y) * (1 - *alpha));
  return loss.mean();
}

torch::Tensor dice(const Terms& t, const torch::Tensor& y, double smooth) {
  auto inter = (t.p * y).sum();
  return 1 - (2 * inter + smooth) / (t.p.sum() + y.sum() + smooth);
}

torch::Tensor combine(const LossConfig& c, const Terms& t, const torch::Tensor& y) {
  const auto [wa, wb] = c.combo_weights;
  switch (c.kind) {
    case LossKind::ce:
      return ce(t, y);
    case LossKind::focal:
      return focal(t, y, c.focal_gamma, c.focal_alpha);
    case LossKind::dice:
      return dice(t, y, c.dice_smooth);
    case LossKind::focal_dice:
      return wa * focal(t, y, c.focal_gamma, c.focal_alpha) + wb * dice(t, y, c.dice_smooth);
    case LossKind::ce_dice:
      return wa * ce(t, y) + wb * dice(t, y, c.dice_smooth);
  }
  fail(Errc::invalid_config, "unknown loss kind");
}

}  // namespace

std::string_view to_string(LossKind kind) {
  for (const auto& [k, name] : kKinds)
    if (k == kind) return name;
  return "?";
}

LossKind parse_loss_kind(std::string_view text) {
  for (const auto& [k, name] : kKinds)
    if (name == text) return k;
  fail(Errc::invalid_config, "unknown loss kind '" + std::string(text) + "'");
}

void LossConfig::validate() const {
  if (focal_gamma < 0) fail(Errc::invalid_config, "loss.focal_gamma must be >= 0");
  if (focal_alpha && (*focal_alpha < 0 || *focal_alpha > 1)) fail(Errc::invalid_config, "loss.focal_alpha must lie in [0,1]");
  if (!(dice_smooth > 0)) fail(Errc::invalid_config, "loss.dice_smooth must be > 0");
  if (combo_weights.first < 0 || combo_weights.second < 0 || combo_weights.first + combo_weights.second == 0)
    fail(Errc::invalid_config, "loss.combo_weights must be non-negative and not both zero");
}

torch::Tensor ce_loss(const torch::Tensor& prob, const torch::Tensor& gt) {
  check_shapes(prob, gt);
  return ce(from_prob(prob), gt.to(prob.dtype()));
}

torch::Tensor focal_loss(const torch::Tensor& prob, const torch::Tensor& gt, double gamma, std::optional<double> alpha) {
  check_shapes(prob, gt);
  return focal(from_prob(prob), gt.to(prob.dtype()), gamma, alpha);
}

torch::Tensor dice_loss(const torch::Tensor& prob, const torch::Tensor& gt, double smooth) {
  check_shapes(prob, gt);
  return dice(from_prob(prob), gt.to(prob.dtype()), smooth);
}

torch::Tensor combined_loss(const LossConfig& config, const torch::Tensor& prob, const torch::Tensor& gt) {
  check_shapes(prob, gt);
  return combine(config, from_prob(prob), gt.to(prob.dtype()));
}

torch::Tensor combined_loss_from_logits(const LossConfig& config, const torch::Tensor& logits, const torch::Tensor& gt) {
  check_shapes(logits, gt);
  return combine(config, from_logits(logits), gt.to(logits.dtype()));
}

}  // namespace cdet
