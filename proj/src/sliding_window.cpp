#include "diffunet/sliding_window.hpp"

#include "diffunet/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace diffunet {

using torch::indexing::Slice;

BlendMode parse_blend(const std::string& name) {
  if (name == "gaussian") return BlendMode::kGaussian;
  if (name == "constant") return BlendMode::kConstant;
  throw ConfigError("unknown blend mode '" + name + "' (expected gaussian|constant)");
}

TilingPlan plan_tiles(const Shape3& volume_shape, const Shape3& patch_size, double overlap, BlendMode blend) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
  TilingPlan plan;
  plan.volume_shape = volume_shape;
  plan.patch_size = patch_size;
  plan.overlap = overlap;
  plan.blend = blend;
  std::array<std::vector<int64_t>, 3> axis_positions;
  for (size_t a = 0; a < 3; ++a) {
    if (volume_shape[a] < 1 || patch_size[a] < 1) {
      throw ShapeError("volume and patch dims must be positive");
    }
    const int64_t padded = std::max(volume_shape[a], patch_size[a]);
    plan.padded_shape[a] = padded;
    plan.pad_before[a] = (padded - volume_shape[a]) / 2;
    const auto stride = std::max<int64_t>(
        1, static_cast<int64_t>(std::ceil(static_cast<double>(patch_size[a]) * (1.0 - overlap))));
    auto& pos = axis_positions[a];
    for (int64_t p = 0;; p += stride) {
      if (p + patch_size[a] >= padded) {
        pos.push_back(padded - patch_size[a]);
        break;
      }
      pos.push_back(p);
    }
  }
  for (auto d : axis_positions[0])
    for (auto w : axis_positions[1])
      for (auto h : axis_positions[2]) plan.positions.push_back({d, w, h});
  return plan;
}

torch::Tensor blend_weights(const Shape3& patch_size, BlendMode blend) {
  if (blend == BlendMode::kConstant) {
    return torch::ones({patch_size[0], patch_size[1], patch_size[2]}, torch::kFloat64);
  }
  std::array<torch::Tensor, 3> axes;
  for (size_t a = 0; a < 3; ++a) {
    const double sigma = 0.125 * static_cast<double>(patch_size[a]);
    const double centre = (static_cast<double>(patch_size[a]) - 1.0) / 2.0;
    auto x = torch::arange(patch_size[a], torch::kFloat64) - centre;
    axes[a] = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  }
  auto w = axes[0].view({-1, 1, 1}) * axes[1].view({1, -1, 1}) * axes[2].view({1, 1, -1});
  return (w / w.max()).clamp_min(1e-3);
}

torch::Tensor pad_to_plan(const torch::Tensor& volume, const TilingPlan& plan) {
  if (volume.dim() != 4) throw ShapeError("expected a (C, D, W, H) volume");
  if (spatial_shape(volume) != plan.volume_shape) throw ShapeError("volume shape differs from tiling plan");
  if (plan.padded_shape == plan.volume_shape) return volume;
  auto out = torch::zeros({volume.size(0), plan.padded_shape[0], plan.padded_shape[1], plan.padded_shape[2]},
                          volume.options());
  out.index_put_({Slice(), Slice(plan.pad_before[0], plan.pad_before[0] + plan.volume_shape[0]),
                  Slice(plan.pad_before[1], plan.pad_before[1] + plan.volume_shape[1]),
                  Slice(plan.pad_before[2], plan.pad_before[2] + plan.volume_shape[2])},
                 volume);
  return out;
}

Stitcher::Stitcher(const TilingPlan& plan, int64_t channels, torch::Dtype dtype) : plan_(plan) {
  weights_ = blend_weights(plan.patch_size, plan.blend).to(dtype);
  const auto& s = plan.padded_shape;
  mean_ = torch::zeros({channels, s[0], s[1], s[2]}, dtype);
  accumulated_ = torch::zeros({s[0], s[1], s[2]}, dtype);
}

void Stitcher::add(size_t position_index, const torch::Tensor& patch_output) {
  const auto& pos = plan_.positions.at(position_index);
  const auto& p = plan_.patch_size;
  if (patch_output.dim() != 4 || patch_output.size(0) != mean_.size(0) || spatial_shape(patch_output) != p) {
    throw ShapeError("patch output " + std::string(c10::str(patch_output.sizes())) + " does not match plan");
  }
  const auto region = std::vector<at::indexing::TensorIndex>{
      Slice(pos[0], pos[0] + p[0]), Slice(pos[1], pos[1] + p[1]), Slice(pos[2], pos[2] + p[2])};
  std::vector<at::indexing::TensorIndex> chan_region{Slice()};
  chan_region.insert(chan_region.end(), region.begin(), region.end());

  auto acc = accumulated_.index(region);
  auto total = acc + weights_;
  auto step = weights_ / total;  // exactly 1 on first coverage
  auto m = mean_.index(chan_region);
  mean_.index_put_(chan_region, m + step.unsqueeze(0) * (patch_output.to(mean_.scalar_type()) - m));
  accumulated_.index_put_(region, total);
  ++added_;
}

torch::Tensor Stitcher::finish() const {
  if (!(accumulated_ > 0).all().item<bool>()) throw ShapeError("tiling plan leaves voxels uncovered");
  const auto& b = plan_.pad_before;
  const auto& v = plan_.volume_shape;
  return mean_.index({Slice(), Slice(b[0], b[0] + v[0]), Slice(b[1], b[1] + v[1]), Slice(b[2], b[2] + v[2])})
      .contiguous();
}

torch::Tensor stitch(const std::vector<torch::Tensor>& patch_outputs, const TilingPlan& plan) {
  if (patch_outputs.size() != plan.positions.size()) {
    throw ShapeError("stitch: " + std::to_string(patch_outputs.size()) + " outputs for " +
                     std::to_string(plan.positions.size()) + " positions");
  }
  if (patch_outputs.empty()) throw ShapeError("stitch: no patch outputs");
  Stitcher stitcher(plan, patch_outputs.front().size(0), patch_outputs.front().scalar_type());
  for (size_t i = 0; i < patch_outputs.size(); ++i) stitcher.add(i, patch_outputs[i]);
  return stitcher.finish();
}

torch::Tensor sliding_window_inference(
    const torch::Tensor& volume, const TilingPlan& plan,
    const std::function<torch::Tensor(const torch::Tensor& patch, size_t index)>& patch_fn) {
  auto padded = pad_to_plan(volume, plan);
  const auto& p = plan.patch_size;
  std::unique_ptr<Stitcher> stitcher;
  for (size_t i = 0; i < plan.positions.size(); ++i) {
    const auto& pos = plan.positions[i];
    auto patch = padded.index({Slice(), Slice(pos[0], pos[0] + p[0]), Slice(pos[1], pos[1] + p[1]),
                               Slice(pos[2], pos[2] + p[2])});
    auto out = patch_fn(patch.contiguous(), i);
    if (!stitcher) stitcher = std::make_unique<Stitcher>(plan, out.size(0), out.scalar_type());
    stitcher->add(i, out);
  }
  return stitcher->finish();
}

}  // namespace diffunet
