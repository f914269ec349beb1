#include "diffunet/patches.hpp"

#include "diffunet/error.hpp"

#include <algorithm>

namespace diffunet {

using torch::indexing::Slice;

VolumeRecord pad_record(const VolumeRecord& record, const Shape3& patch) {
  const auto shape = record.labels.shape();
  bool needs = false;
  for (size_t a = 0; a < 3; ++a) needs = needs || shape[a] < patch[a];
  if (!needs) return record;
  // constant_pad_nd pads the last dim first.
  std::vector<int64_t> pad;
  for (size_t a = 3; a-- > 0;) {
    const int64_t total = std::max<int64_t>(0, patch[a] - shape[a]);
    pad.push_back(total / 2);
    pad.push_back(total - total / 2);
  }
  VolumeRecord out = record;
  out.image.data = torch::constant_pad_nd(record.image.data, pad, 0);
  out.labels.data = torch::constant_pad_nd(record.labels.data, pad, 0);
  return out;
}

std::vector<TrainingPatch> sample_patches(const VolumeRecord& record, const Shape3& patch, int64_t n, uint64_t seed,
                                          double fg_bias) {
  if (n < 0) throw ConfigError("patch count must be >= 0");
  if (!(fg_bias >= 0.0 && fg_bias <= 1.0)) throw ConfigError("fg_bias must lie in [0, 1]");
  const auto padded = pad_record(record, patch);
  const auto shape = padded.labels.shape();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  torch::Tensor foreground;  // lazily built (K, 3) voxel list
  std::vector<TrainingPatch> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Shape3 offset{};
    const bool centred = fg_bias > 0.0 && unit(rng) < fg_bias;
    if (centred && !foreground.defined()) foreground = torch::nonzero(padded.labels.data > 0);
    if (centred && foreground.size(0) > 0) {
      std::uniform_int_distribution<int64_t> pick(0, foreground.size(0) - 1);
      auto voxel = foreground[pick(rng)];
      for (size_t a = 0; a < 3; ++a) {
        const int64_t c = voxel[static_cast<int64_t>(a)].item<int64_t>();
        offset[a] = std::clamp<int64_t>(c - patch[a] / 2, 0, shape[a] - patch[a]);
      }
    } else {
      for (size_t a = 0; a < 3; ++a) {
        std::uniform_int_distribution<int64_t> pos(0, shape[a] - patch[a]);
        offset[a] = pos(rng);
      }
    }
    const auto region = std::vector<at::indexing::TensorIndex>{
        Slice(offset[0], offset[0] + patch[0]), Slice(offset[1], offset[1] + patch[1]),
        Slice(offset[2], offset[2] + patch[2])};
    std::vector<at::indexing::TensorIndex> chan_region{Slice()};
    chan_region.insert(chan_region.end(), region.begin(), region.end());
    out.push_back({padded.image.data.index(chan_region).clone(), padded.labels.data.index(region).clone(), offset});
  }
  return out;
}

AugmentDraw draw_augment(std::mt19937_64& rng, const Shape3& patch) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  for (auto& f : d.flip) f = unit(rng) < 0.5;
  d.rotate = unit(rng) < 0.5;
  d.plane = static_cast<int>(std::uniform_int_distribution<int>(0, 2)(rng));
  d.quarter_turns = std::uniform_int_distribution<int>(1, 3)(rng);
  static constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  if (patch[kPlaneAxes[d.plane][0]] != patch[kPlaneAxes[d.plane][1]]) d.quarter_turns = 2;
  d.scale = std::uniform_real_distribution<double>(0.9, 1.1)(rng);
  d.shift = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  return d;
}

TrainingPatch apply_augment(const TrainingPatch& patch, const AugmentDraw& draw) {
  static constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  auto image = patch.image;
  auto labels = patch.labels;
  for (int a = 0; a < 3; ++a) {
    if (!draw.flip[static_cast<size_t>(a)]) continue;
    image = image.flip({a + 1});
    labels = labels.flip({a});
  }
  if (draw.rotate) {
    const auto* axes = kPlaneAxes[draw.plane];
    if (draw.quarter_turns % 2 == 1 && labels.size(axes[0]) != labels.size(axes[1])) {
      throw ShapeError("quarter-turn rotation needs a square plane");
    }
    image = torch::rot90(image, draw.quarter_turns, {axes[0] + 1, axes[1] + 1});
    labels = torch::rot90(labels, draw.quarter_turns, {axes[0], axes[1]});
  }
  if (draw.scale != 1.0 || draw.shift != 0.0) image = image * draw.scale + draw.shift;
  return {image.contiguous(), labels.contiguous(), patch.offset};
}

TrainingPatch augment(const TrainingPatch& patch, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return apply_augment(patch, draw_augment(rng, spatial_shape(patch.labels)));
}

}  // namespace diffunet
