#pragma once

#include "diffunet/volume_io.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace diffunet {

/// Aligned image/label crop.
struct TrainingPatch {
  torch::Tensor image;   // (M, p0, p1, p2) float
  torch::Tensor labels;  // (p0, p1, p2) int64
  Shape3 offset{};       // crop origin in the (padded) record
};

/// Zero-pads image and labels symmetrically so every axis is >= patch.
VolumeRecord pad_record(const VolumeRecord& record, const Shape3& patch);

/// n random crops. With probability fg_bias a crop is centred on a
/// uniformly chosen foreground voxel (clamped inside the volume);
/// otherwise its offset is uniform.
std::vector<TrainingPatch> sample_patches(const VolumeRecord& record, const Shape3& patch, int64_t n, uint64_t seed,
                                          double fg_bias = 0.5);

/// One draw of the augmentation parameters.
struct AugmentDraw {
  std::array<bool, 3> flip{false, false, false};
  bool rotate = false;
  int plane = 0;          // 0: (D,W), 1: (D,H), 2: (W,H)
  int quarter_turns = 1;  // 1..3
  double scale = 1.0;     // intensity multiplier in [0.9, 1.1]
  double shift = 0.0;     // intensity offset in [-0.1, 0.1]
};

/// Flips p=0.5 per axis, right-angle rotation p=0.5 in a random plane
/// (half-turns only if that plane is not square), scale and shift uniform.
AugmentDraw draw_augment(std::mt19937_64& rng, const Shape3& patch);

/// Geometric transforms go to both image and labels; intensity ones to the image only.
TrainingPatch apply_augment(const TrainingPatch& patch, const AugmentDraw& draw);

TrainingPatch augment(const TrainingPatch& patch, uint64_t seed);

}  // namespace diffunet
