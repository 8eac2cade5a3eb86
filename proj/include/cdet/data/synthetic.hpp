#pragma once

#include <cstdint>
#include <vector>

#include "cdet/data/types.hpp"

namespace cdet {

/// Smallest per-channel difference between a recolored pixel and its original.
inline constexpr float kRecolorThreshold = 0.1f;

/// Desk-scale bi-temporal dataset. Each post image is its pre image with a
/// few rectangles/ellipses recolored; the mask marks exactly those pixels.
/// Deterministic in (n, change_ratio, size, seed, split).
std::vector<Sample> make_synthetic_dataset(int64_t n, double change_ratio, int64_t size,
                                           uint64_t seed, Split split = Split::train);

}  // namespace cdet
