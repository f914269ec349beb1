#include "testing.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"
#include "diffunet/suf.hpp"

#include <cmath>

using namespace diffunet;

namespace {
// mpmath, 50 digits (tests/oracles/frozen_values.py)
constexpr double kExpSigmoidOne = 2.077278406727263629;
constexpr double kTwoStepFused = 0.52669764060262975832;
constexpr double kTwoStepRaw = 1.763533909659160869;

torch::Tensor scalar(double v) { return torch::full({1, 1, 1, 1}, v, torch::kFloat64); }

StepPrediction step_of(int64_t i, const torch::Tensor& mean, double scale, FusionMode mode = FusionMode::kStepUncertainty) {
  FusionConfig cfg;
  cfg.samples = 1;
  cfg.scale = scale;
  cfg.mode = mode;
  std::vector<std::vector<torch::Tensor>> s(static_cast<size_t>(i), std::vector<torch::Tensor>{mean});
  return summarize_steps(s, cfg).back();
}

}  // namespace

TEST_SUITE("suf_fusion") {
  TEST_CASE("sample mean") {
    auto a = torch::rand({2, 3, 3, 3}, torch::kFloat64);
    CHECK(torch::equal(mean_prediction({a}), a));
    CHECK(mean_prediction({scalar(0.2), scalar(0.6)}).item<double>() == doctest::Approx(0.4).epsilon(1e-15));
    std::vector<torch::Tensor> s;
    for (int i = 0; i < 4; ++i) s.push_back(torch::rand({2, 2, 2, 2}, torch::kFloat64));
    auto m = mean_prediction(s);
    auto flat = m.flatten();
    for (int64_t v = 0; v < flat.numel(); ++v) {
      double acc = 0.0;
      for (const auto& x : s) acc += x.flatten()[v].item<double>();
      CHECK(std::abs(flat[v].item<double>() - acc / 4.0) < 1e-7);
    }
  }

  TEST_CASE("uncertainty map") {
    CHECK(uncertainty_map(scalar(1.0)).item<double>() == 0.0);
    CHECK(uncertainty_map(scalar(0.0)).item<double>() == 0.0);
    const double inv_e = std::exp(-1.0);
    CHECK(std::abs(uncertainty_map(scalar(inv_e)).item<double>() - inv_e) < 1e-12);
    auto grid = torch::linspace(0.0, 1.0, 10001, torch::kFloat64);
    CHECK(uncertainty_map(grid).max().item<double>() <= inv_e + 1e-12);
  }

  TEST_CASE("fusion weight") {
    CHECK(torch::allclose(fusion_weight(3, torch::ones({2, 2}, torch::kFloat64), 10.0), torch::ones({2, 2}, torch::kFloat64)));
    CHECK(std::abs(fusion_weight(10, scalar(0.0), 10.0).item<double>() - kExpSigmoidOne) < 1e-12);
    for (double u : {0.0, 0.1, 0.3678}) {
      double prev = 0.0;
      for (int64_t i = 1; i <= 20; ++i) {
        const double w = fusion_weight(i, scalar(u), 10.0).item<double>();
        CHECK(w > prev);
        prev = w;
      }
    }
  }

  TEST_CASE("fuse identities") {
    auto p = torch::rand({2, 3, 3, 3}, torch::kFloat64);
    CHECK(torch::allclose(fuse({step_of(1, p, 1.0)}), p, 0, 1e-14));
    auto same = fuse({step_of(1, p, 2.0), step_of(2, p, 2.0)});
    CHECK(torch::allclose(same, p, 0, 1e-14));
  }

  TEST_CASE("two-step scalar oracle") {
    std::vector<StepPrediction> steps{step_of(1, scalar(0.2), 2.0), step_of(2, scalar(0.8), 2.0)};
    CHECK(std::abs(fuse(steps, true).item<double>() - kTwoStepFused) < 1e-6);
    CHECK(std::abs(fuse(steps, false).item<double>() - kTwoStepRaw) < 1e-6);
  }

  TEST_CASE("simple mode is the plain mean of step means") {
    std::vector<StepPrediction> steps{step_of(1, scalar(0.2), 2.0, FusionMode::kSimple),
                                      step_of(2, scalar(0.8), 2.0, FusionMode::kSimple)};
    CHECK(fuse(steps).item<double>() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(steps[0].weight.item<double>() == 1.0);
  }

  TEST_CASE("default scale is the number of steps") {
    FusionConfig cfg;
    cfg.samples = 1;
    std::vector<std::vector<torch::Tensor>> s{{scalar(0.5)}, {scalar(0.5)}, {scalar(0.0)}};
    auto steps = summarize_steps(s, cfg);
    CHECK(std::abs(steps[2].weight.item<double>() - kExpSigmoidOne) < 1e-12);
  }

  TEST_CASE("degenerate pipeline and constant models") {
    auto sched = NoiseSchedule::linear(1000);
    torch::manual_seed(7);
    auto fixed = torch::rand({2, 4, 4, 4});
    Denoiser constant = [&](const torch::Tensor& x, int64_t) { return fixed.unsqueeze(0).expand_as(x).clone(); };
    FusionConfig cfg;
    for (int64_t s : {1, 3}) {
      for (int64_t k : {1, 4}) {
        cfg.samples = s;
        auto r = run_suf_inference(constant, {2, 4, 4, 4}, DdimPlan::evenly_spaced(1000, k), sched, cfg, 1);
        CHECK(torch::allclose(r.fused, fixed, 0, 1e-6));
        CHECK(static_cast<int64_t>(r.steps.size()) == k);
      }
    }

    Denoiser live = [](const torch::Tensor& x, int64_t) { return torch::sigmoid(x); };
    cfg.samples = 1;
    auto r = run_suf_inference(live, {2, 4, 4, 4}, DdimPlan::evenly_spaced(1000, 1), sched, cfg, 5);
    auto x_T = trajectory_noise({2, 4, 4, 4}, 1, 5)[0];
    CHECK(torch::allclose(r.fused, torch::sigmoid(x_T), 0, 1e-7));

    cfg.samples = 4;
    auto a = run_suf_inference(live, {2, 4, 4, 4}, DdimPlan::evenly_spaced(1000, 5), sched, cfg, 9);
    auto b = run_suf_inference(live, {2, 4, 4, 4}, DdimPlan::evenly_spaced(1000, 5), sched, cfg, 9);
    CHECK(torch::equal(a.fused, b.fused));
  }

  TEST_CASE("trajectory noise prefixes are stable") {
    auto four = trajectory_noise({2, 3, 3, 3}, 4, 17);
    auto six = trajectory_noise({2, 3, 3, 3}, 6, 17);
    CHECK(torch::equal(four, six.slice(0, 0, 4)));
  }

  TEST_CASE("config validation") {
    FusionConfig cfg;
    cfg.samples = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.samples = 2;
    cfg.scale = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}
