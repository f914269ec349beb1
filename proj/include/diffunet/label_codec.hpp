#pragma once

#include "diffunet/volume.hpp"

namespace diffunet {

/// One-hot embeds a label map: channel c is 1 exactly where labels == c.
/// Throws OutOfRangeError naming the first offending value when a label
/// falls outside [0, num_classes).
OneHotVolume encode_one_hot(const LabelVolume& labels, int64_t num_classes,
                            torch::Dtype dtype = torch::kFloat32);

/// Per-voxel index of the largest channel; ties go to the lowest index.
/// Accepts (N, D, W, H) probabilities and returns an int64 (D, W, H) map.
LabelVolume decode_argmax(const torch::Tensor& probs, const Spacing& spacing = {1.0, 1.0, 1.0});

/// Per-channel binary masks probs[c] >= tau, shape (N, D, W, H), dtype bool.
/// Masks may overlap, which is what nested evaluation regions need.
torch::Tensor decode_threshold(const torch::Tensor& probs, double tau);

}  // namespace diffunet
