#pragma once

#include <torch/torch.h>

#include "cdet/data/types.hpp"

namespace cdet {

/// Error overlay on the post image (3xHxW in [0,1]): true positives white,
/// false positives red, false negatives blue, true negatives untouched.
/// Normalized pairs are mapped back to [0,1] first.
torch::Tensor render_overlay(const ImagePair& pair, const ChangeMask& pred, const ChangeMask& gt);

/// Four tiles side by side: pre, post, ground truth, overlay (3 x H x 4W).
torch::Tensor render_panel(const ImagePair& pair, const ChangeMask& pred, const ChangeMask& gt);

}  // namespace cdet
