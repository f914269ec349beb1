#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

namespace diffunet {

/// Linear-beta noise schedule with precomputed products. Timesteps are
/// 0-based, t in [0, T). Index -1 denotes the clean endpoint (alpha_bar = 1).
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int64_t steps, double beta_start = 1e-4, double beta_end = 0.02);

  int64_t steps() const { return static_cast<int64_t>(beta_.size()); }
  double beta(int64_t t) const { return beta_.at(static_cast<size_t>(t)); }
  double alpha(int64_t t) const { return alpha_.at(static_cast<size_t>(t)); }
  double alpha_bar(int64_t t) const;

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Schedule parameters as they appear in run configs.
struct DiffusionConfig {
  int64_t steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule make() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
};

/// Reverse-process timesteps, strictly decreasing.
struct DdimPlan {
  std::vector<int64_t> timesteps;
  double eta = 0.0;

  /// K indices evenly spaced over [0, T), from T-1 down to 0.
  static DdimPlan evenly_spaced(int64_t total_steps, int64_t k, double eta = 0.0);
  int64_t size() const { return static_cast<int64_t>(timesteps.size()); }
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; t = -1 returns x0.
torch::Tensor q_sample(const torch::Tensor& x0, int64_t t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);

/// Per-sample timesteps: `t` is an int64 tensor of length x0.size(0).
torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched);

/// One DDIM update from t to t_prev for an x0-predicting model. The
/// prediction is clamped to [0, 1] before re-noising. `noise` may be
/// undefined when eta == 0.
torch::Tensor ddim_step(const torch::Tensor& x_t, const torch::Tensor& x0_hat, int64_t t,
                        int64_t t_prev, const NoiseSchedule& sched, double eta,
                        const torch::Tensor& noise = {});

/// A model with its conditioning image already bound: (x_t, t) -> x0_hat in [0, 1].
using Denoiser = std::function<torch::Tensor(const torch::Tensor& x_t, int64_t t)>;

/// Runs the reverse process from `x_T` and returns the model's x0 prediction
/// at every plan step, in order. `gen` feeds the eta > 0 noise.
std::vector<torch::Tensor> sample_loop(const Denoiser& model, torch::Tensor x_T, const DdimPlan& plan,
                                       const NoiseSchedule& sched, at::Generator gen);

/// Same, drawing x_T ~ N(0, I) of the given shape from `seed`.
std::vector<torch::Tensor> sample_loop(const Denoiser& model, at::IntArrayRef shape,
                                       const DdimPlan& plan, const NoiseSchedule& sched,
                                       uint64_t seed);

}  // namespace diffunet
