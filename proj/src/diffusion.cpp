#include "diffunet/diffusion.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <string>

namespace diffunet {

at::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

NoiseSchedule NoiseSchedule::linear(int64_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("beta bounds must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_.resize(static_cast<size_t>(steps));
  s.alpha_.resize(s.beta_.size());
  s.alpha_bar_.resize(s.beta_.size());
  double prod = 1.0;
  for (int64_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    const auto i = static_cast<size_t>(t);
    s.beta_[i] = beta;
    s.alpha_[i] = 1.0 - beta;
    prod *= s.alpha_[i];
    s.alpha_bar_[i] = prod;
  }
  return s;
}

double NoiseSchedule::alpha_bar(int64_t t) const {
  if (t == -1) return 1.0;
  if (t < -1 || t >= steps()) {
    throw OutOfRangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + ")");
  }
  return alpha_bar_[static_cast<size_t>(t)];
}

DdimPlan DdimPlan::evenly_spaced(int64_t total_steps, int64_t k, double eta) {
  if (k < 1 || k > total_steps) throw ConfigError("DDIM steps must lie in [1, T]");
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  DdimPlan plan;
  plan.eta = eta;
  for (int64_t i = 0; i < k; ++i) {
    // round(linspace(T-1, 0, K)); K = 1 gives {T-1}
    const double pos = k == 1 ? static_cast<double>(total_steps - 1)
                              : static_cast<double>(total_steps - 1) * static_cast<double>(k - 1 - i) /
                                    static_cast<double>(k - 1);
    plan.timesteps.push_back(static_cast<int64_t>(std::llround(pos)));
  }
  return plan;
}

torch::Tensor q_sample(const torch::Tensor& x0, int64_t t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
  if (!x0.sizes().equals(eps.sizes())) throw ShapeError("q_sample: noise shape differs from x0");
  if (t < -1 || t >= sched.steps()) throw OutOfRangeError("q_sample: timestep " + std::to_string(t) + " out of range");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& sched) {
  if (!x0.sizes().equals(eps.sizes())) throw ShapeError("q_sample: noise shape differs from x0");
  if (t.dim() != 1 || t.size(0) != x0.size(0)) throw ShapeError("q_sample: need one timestep per sample");
  if (t.min().item<int64_t>() < 0 || t.max().item<int64_t>() >= sched.steps()) {
    throw OutOfRangeError("q_sample: timestep out of range");
  }
  auto table = torch::tensor(sched.alpha_bars(), torch::kFloat64).index_select(0, t.to(torch::kInt64));
  std::vector<int64_t> bshape(static_cast<size_t>(x0.dim()), 1);
  bshape[0] = x0.size(0);
  auto ab = table.view(bshape).to(x0.scalar_type());
  return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor ddim_step(const torch::Tensor& x_t, const torch::Tensor& x0_hat, int64_t t,
                        int64_t t_prev, const NoiseSchedule& sched, double eta,
                        const torch::Tensor& noise) {
  if (t <= t_prev) {
    throw ConfigError("ddim_step: t (" + std::to_string(t) + ") must exceed t_prev (" + std::to_string(t_prev) + ")");
  }
  if (!x_t.sizes().equals(x0_hat.sizes())) throw ShapeError("ddim_step: prediction shape differs from x_t");
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  auto x0 = x0_hat.clamp(0.0, 1.0);
  auto eps_hat = (x_t - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  auto out = std::sqrt(ab_prev) * x0 + dir * eps_hat;
  if (sigma > 0.0) {
    if (!noise.defined() || !noise.sizes().equals(x_t.sizes())) {
      throw ShapeError("ddim_step: eta > 0 needs noise shaped like x_t");
    }
    out = out + sigma * noise;
  }
  return out;
}

std::vector<torch::Tensor> sample_loop(const Denoiser& model, torch::Tensor x_T, const DdimPlan& plan,
                                       const NoiseSchedule& sched, at::Generator gen) {
  if (plan.timesteps.empty()) throw ConfigError("sample_loop: empty DDIM plan");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> predictions;
  predictions.reserve(plan.timesteps.size());
  auto x = std::move(x_T);
  for (size_t k = 0; k < plan.timesteps.size(); ++k) {
    const int64_t t = plan.timesteps[k];
    const int64_t t_prev = k + 1 < plan.timesteps.size() ? plan.timesteps[k + 1] : -1;
    auto x0_hat = model(x, t);
    if (!x0_hat.sizes().equals(x.sizes())) {
      throw ShapeError("sample_loop: model output shape " + std::string(c10::str(x0_hat.sizes())) +
                       " differs from x_t shape " + std::string(c10::str(x.sizes())));
    }
    predictions.push_back(x0_hat);
    torch::Tensor noise;
    if (plan.eta > 0.0) noise = torch::randn(x.sizes(), gen, x.options());
    x = ddim_step(x, x0_hat, t, t_prev, sched, plan.eta, noise);
  }
  return predictions;
}

std::vector<torch::Tensor> sample_loop(const Denoiser& model, at::IntArrayRef shape,
                                       const DdimPlan& plan, const NoiseSchedule& sched,
                                       uint64_t seed) {
  auto gen = make_generator(seed);
  auto x_T = torch::randn(shape, gen, torch::kFloat32);
  return sample_loop(model, x_T, plan, sched, gen);
}

}  // namespace diffunet
