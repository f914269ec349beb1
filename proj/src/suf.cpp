#include "diffunet/suf.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <cmath>
#include <string>

namespace diffunet {

void FusionConfig::validate() const {
  if (samples < 1) throw ConfigError("fusion.samples must be >= 1");
  if (scale && !(*scale > 0.0)) throw ConfigError("fusion.scale must be > 0");
}

torch::Tensor mean_prediction(const std::vector<torch::Tensor>& samples) {
  if (samples.empty()) throw ConfigError("mean_prediction: empty sample set");
  for (const auto& s : samples) {
    if (!s.sizes().equals(samples.front().sizes())) throw ShapeError("mean_prediction: sample shapes differ");
  }
  return torch::stack(samples).mean(0);
}

torch::Tensor uncertainty_map(const torch::Tensor& mean) {
  auto u = -mean * torch::log(mean);
  return torch::where(mean > 0, u, torch::zeros_like(u));
}

torch::Tensor fusion_weight(int64_t step, const torch::Tensor& uncertainty, double scale) {
  const double gate = 1.0 / (1.0 + std::exp(-static_cast<double>(step) / scale));
  return torch::exp(gate * (1.0 - uncertainty));
}

std::vector<StepPrediction> summarize_steps(const std::vector<std::vector<torch::Tensor>>& samples,
                                            const FusionConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("summarize_steps: no steps");
  const double scale = cfg.scale.value_or(static_cast<double>(samples.size()));
  std::vector<StepPrediction> steps;
  steps.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    StepPrediction step;
    step.step_index = static_cast<int64_t>(i) + 1;
    step.samples = samples[i];
    step.mean = mean_prediction(step.samples);
    step.uncertainty = uncertainty_map(step.mean);
    step.weight = cfg.mode == FusionMode::kSimple ? torch::ones_like(step.mean)
                                                  : fusion_weight(step.step_index, step.uncertainty, scale);
    steps.push_back(std::move(step));
  }
  return steps;
}

torch::Tensor fuse(const std::vector<StepPrediction>& steps, bool normalize) {
  if (steps.empty()) throw ConfigError("fuse: empty step sequence");
  auto numerator = torch::zeros_like(steps.front().mean);
  auto denominator = torch::zeros_like(steps.front().mean);
  for (const auto& step : steps) {
    if (!step.mean.sizes().equals(numerator.sizes()) || !step.weight.sizes().equals(numerator.sizes())) {
      throw ShapeError("fuse: step " + std::to_string(step.step_index) + " shape differs");
    }
    numerator += step.weight * step.mean;
    denominator += step.weight;
  }
  return normalize ? numerator / denominator : numerator;
}

torch::Tensor trajectory_noise(at::IntArrayRef label_shape, int64_t count, uint64_t seed) {
  std::vector<torch::Tensor> draws;
  draws.reserve(static_cast<size_t>(count));
  for (int64_t s = 0; s < count; ++s) {
    auto gen = make_generator(derive_seed(seed, {static_cast<uint64_t>(s)}));
    draws.push_back(torch::randn(label_shape, gen, torch::kFloat32));
  }
  return torch::stack(draws);
}

SufResult run_suf_inference(const Denoiser& model, at::IntArrayRef label_shape, const DdimPlan& plan,
                            const NoiseSchedule& sched, const FusionConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (label_shape.size() != 4) throw ShapeError("run_suf_inference: label shape must be (N, D, W, H)");
  auto x_T = trajectory_noise(label_shape, cfg.samples, seed);
  auto gen = make_generator(derive_seed(seed, {0xe7a0ULL}));
  auto batched = sample_loop(model, x_T, plan, sched, gen);

  std::vector<std::vector<torch::Tensor>> per_step;
  per_step.reserve(batched.size());
  for (const auto& prediction : batched) per_step.push_back(prediction.unbind(0));

  SufResult result;
  result.steps = summarize_steps(per_step, cfg);
  result.fused = fuse(result.steps, cfg.normalize);
  return result;
}

}  // namespace diffunet
