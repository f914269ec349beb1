#pragma once

#include "diffunet/diffusion.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

namespace diffunet {

enum class FusionMode {
  kStepUncertainty,  // w_i = exp(sigmoid(i / scale) * (1 - u_i))
  kSimple,           // w_i = 1
};

struct FusionConfig {
  int64_t samples = 4;          // S trajectories per step
  std::optional<double> scale;  // defaults to the number of DDIM steps
  FusionMode mode = FusionMode::kStepUncertainty;
  bool normalize = true;  // divide by sum of weights; false keeps the raw weighted sum

  void validate() const;
};

/// Everything known about one reverse step i (1-based, noisy -> clean).
struct StepPrediction {
  int64_t step_index = 0;
  std::vector<torch::Tensor> samples;  // S probability volumes
  torch::Tensor mean;                  // p_bar_i
  torch::Tensor uncertainty;           // u_i = -p_bar_i ln p_bar_i
  torch::Tensor weight;                // w_i
};

torch::Tensor mean_prediction(const std::vector<torch::Tensor>& samples);

/// Elementwise -p ln p with 0 ln 0 = 0.
torch::Tensor uncertainty_map(const torch::Tensor& mean);

/// exp(sigmoid(step / scale) * (1 - u)).
torch::Tensor fusion_weight(int64_t step, const torch::Tensor& uncertainty, double scale);

/// Builds per-step statistics from samples[i][s] (step-major).
std::vector<StepPrediction> summarize_steps(const std::vector<std::vector<torch::Tensor>>& samples,
                                            const FusionConfig& cfg);

/// Y = sum_i w_i p_bar_i, divided by sum_i w_i when `normalize`.
torch::Tensor fuse(const std::vector<StepPrediction>& steps, bool normalize = true);

struct SufResult {
  torch::Tensor fused;  // (N, D, W, H)
  std::vector<StepPrediction> steps;
};

/// Runs S independently seeded reverse trajectories in lockstep over the
/// plan (as one batch through `model`), then fuses the per-step means.
/// `label_shape` is (N, D, W, H); trajectory s starts from
/// N(0, I) drawn with seed derive_seed(seed, {s}).
SufResult run_suf_inference(const Denoiser& model, at::IntArrayRef label_shape, const DdimPlan& plan,
                            const NoiseSchedule& sched, const FusionConfig& cfg, uint64_t seed);

/// Initial noise for trajectories [0, count), stacked to (count, N, D, W, H).
torch::Tensor trajectory_noise(at::IntArrayRef label_shape, int64_t count, uint64_t seed);

}  // namespace diffunet
