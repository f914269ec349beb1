#pragma once

#include "diffunet/volume.hpp"

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace diffunet {

enum class BlendMode { kConstant, kGaussian };

BlendMode parse_blend(const std::string& name);

/// Patch placement over a (possibly padded) volume. Volumes smaller than
/// the patch along an axis are zero-padded symmetrically to the patch size.
struct TilingPlan {
  Shape3 volume_shape{};
  Shape3 padded_shape{};
  Shape3 pad_before{};
  Shape3 patch_size{};
  double overlap = 0.5;
  BlendMode blend = BlendMode::kGaussian;
  std::vector<Shape3> positions;  // offsets into the padded volume, lexicographic
};

/// stride = ceil(patch * (1 - overlap)); the last patch per axis ends at the boundary.
TilingPlan plan_tiles(const Shape3& volume_shape, const Shape3& patch_size, double overlap,
                      BlendMode blend = BlendMode::kGaussian);

/// Per-voxel blend weights for one patch, shape patch_size. Gaussian uses
/// sigma = 0.125 * side per axis, peak 1, floored at 1e-3.
torch::Tensor blend_weights(const Shape3& patch_size, BlendMode blend);

/// Zero-pads a (C, D, W, H) volume to the plan's padded shape.
torch::Tensor pad_to_plan(const torch::Tensor& volume, const TilingPlan& plan);

/// Accumulates (C, p, p, p) patch outputs into a blend-weighted mean over
/// the padded grid. Patches are folded in as a running weighted mean, so a
/// voxel covered by identical values keeps that value exactly.
class Stitcher {
 public:
  Stitcher(const TilingPlan& plan, int64_t channels, torch::Dtype dtype = torch::kFloat32);

  void add(size_t position_index, const torch::Tensor& patch_output);
  /// Cropped (C, D, W, H) result. Throws if some voxel was never covered.
  torch::Tensor finish() const;

 private:
  TilingPlan plan_;
  torch::Tensor weights_;
  torch::Tensor mean_;
  torch::Tensor accumulated_;
  size_t added_ = 0;
};

/// One output per plan position, in plan order.
torch::Tensor stitch(const std::vector<torch::Tensor>& patch_outputs, const TilingPlan& plan);

/// Pads `volume`, runs `patch_fn(patch, index)` per position in plan order,
/// and stitches the (C_out, p, p, p) results.
torch::Tensor sliding_window_inference(
    const torch::Tensor& volume, const TilingPlan& plan,
    const std::function<torch::Tensor(const torch::Tensor& patch, size_t index)>& patch_fn);

}  // namespace diffunet
