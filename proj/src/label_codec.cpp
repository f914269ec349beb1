#include "diffunet/label_codec.hpp"

#include "diffunet/error.hpp"

#include <string>

namespace diffunet {

OneHotVolume encode_one_hot(const LabelVolume& labels, int64_t num_classes, torch::Dtype dtype) {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1, got " + std::to_string(num_classes));
  if (labels.data.dim() != 3) {
    throw ShapeError("label volume must be 3-D, got " + std::to_string(labels.data.dim()) + " dims");
  }
  auto data = labels.data.to(torch::kInt64);
  auto bad = (data < 0).logical_or(data >= num_classes);
  if (bad.any().item<bool>()) {
    const auto value = data.masked_select(bad)[0].item<int64_t>();
    throw OutOfRangeError("label value " + std::to_string(value) + " out of range for " +
                          std::to_string(num_classes) + " classes");
  }
  auto onehot = torch::one_hot(data, num_classes).permute({3, 0, 1, 2}).to(dtype).contiguous();
  return {onehot, num_classes};
}

LabelVolume decode_argmax(const torch::Tensor& probs, const Spacing& spacing) {
  if (probs.dim() != 4) throw ShapeError("decode expects (N, D, W, H) probabilities");
  auto best = probs[0].clone();
  auto index = torch::zeros(best.sizes(), torch::kInt64);
  for (int64_t c = 1; c < probs.size(0); ++c) {
    auto greater = probs[c] > best;  // strict: earlier channel keeps ties
    index.masked_fill_(greater, c);
    best = torch::where(greater, probs[c], best);
  }
  return {index, spacing};
}

torch::Tensor decode_threshold(const torch::Tensor& probs, double tau) {
  if (probs.dim() != 4) throw ShapeError("decode expects (N, D, W, H) probabilities");
  return probs >= tau;
}

}  // namespace diffunet
