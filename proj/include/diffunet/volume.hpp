#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <vector>

namespace diffunet {

using Spacing = std::array<double, 3>;
using Shape3 = std::array<int64_t, 3>;

/// Discrete label map. `data` is int64 with shape (D, W, H).
struct LabelVolume {
  torch::Tensor data;
  Spacing spacing{1.0, 1.0, 1.0};

  Shape3 shape() const { return {data.size(0), data.size(1), data.size(2)}; }
};

/// N-channel label embedding, float tensor of shape (N, D, W, H).
struct OneHotVolume {
  torch::Tensor data;
  int64_t num_classes = 0;
};

struct IntensityStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// M-modality conditioning volume, float tensor of shape (M, D, W, H).
struct ImageVolume {
  torch::Tensor data;
  std::vector<IntensityStats> normalization;  // empty when not normalized

  int64_t modalities() const { return data.size(0); }
  Shape3 shape() const { return {data.size(1), data.size(2), data.size(3)}; }
};

inline Shape3 spatial_shape(const torch::Tensor& t) {
  const auto n = t.dim();
  return {t.size(n - 3), t.size(n - 2), t.size(n - 1)};
}

}  // namespace diffunet
