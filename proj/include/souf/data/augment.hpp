#pragma once

#include <random>
#include <string_view>

#include "souf/data/dataset.hpp"

namespace souf::data {

/// RandAugment-style policy: `num_ops` operations drawn uniformly (with
/// replacement) from a fixed geometric/photometric set, each applied at
/// `magnitude` on a 0..10 scale with a random sign where meaningful.
struct RandAugmentPolicy {
  int num_ops = 2;
  int magnitude = 9;
};

enum class AugmentOp {
  rotate,
  shear_x,
  shear_y,
  translate_x,
  translate_y,
  brightness,
  contrast,
  color,
  solarize,
  posterize,
  sharpness,
  autocontrast,
};

inline constexpr int kNumAugmentOps = 12;

std::string_view to_string(AugmentOp op);

/// Applies one operation. `signed_level` is in [-1, 1] (magnitude / 10 with sign).
Image apply_augment_op(const Image& image, AugmentOp op, double signed_level);

/// Strong view of `image`; output has the same shape and lies in [0, 1].
Image strong_augment(const Image& image, std::mt19937_64& rng,
                     const RandAugmentPolicy& policy = {});

}  // namespace souf::data
