#include "testing.hpp"

#include "diffunet/diffusion.hpp"
#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <cmath>

using namespace diffunet;

namespace {
// mpmath, 50 digits (tests/oracles/frozen_values.py)
constexpr double kAlphaBarLast = 0.000040358297653756833148;
constexpr double kAlphaBar499 = 0.078587242881778237343;
}  // namespace

TEST_SUITE("diffusion_core") {
  TEST_CASE("single-step schedule") {
    auto s = NoiseSchedule::linear(1, 1e-4, 0.02);
    CHECK(s.alpha_bar(0) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
    CHECK(s.alpha_bar(-1) == 1.0);
  }

  TEST_CASE("alpha_bar matches the high-precision product") {
    auto s = NoiseSchedule::linear(1000);
    CHECK(std::abs(s.alpha_bar(999) / kAlphaBarLast - 1.0) < 1e-6);
    CHECK(std::abs(s.alpha_bar(499) / kAlphaBar499 - 1.0) < 1e-6);
    for (int64_t t = 1; t < 1000; ++t) REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK_THROWS_AS(s.alpha_bar(1000), OutOfRangeError);
  }

  TEST_CASE("q_sample substitutions") {
    auto x0 = torch::rand({2, 3, 3, 3}, torch::kFloat64);
    auto eps = torch::randn({2, 3, 3, 3}, torch::kFloat64);
    auto s = NoiseSchedule::linear(1000);
    CHECK(torch::equal(q_sample(x0, -1, eps, s), x0));
    // hand-built schedule point with alpha_bar = 0.25
    const double ab = 0.25;
    auto manual = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * torch::zeros_like(x0);
    CHECK(torch::allclose(manual, 0.5 * x0));
    auto xt = q_sample(x0, 10, torch::zeros_like(x0), s);
    CHECK(torch::allclose(xt, std::sqrt(s.alpha_bar(10)) * x0));
  }

  TEST_CASE("per-sample timesteps") {
    auto s = NoiseSchedule::linear(1000);
    auto x0 = torch::rand({3, 2, 2, 2, 2}, torch::kFloat64);
    auto eps = torch::randn_like(x0);
    auto t = torch::tensor({0, 500, 999}, torch::kInt64);
    auto xt = q_sample(x0, t, eps, s);
    for (int i = 0; i < 3; ++i) {
      auto ref = q_sample(x0[i], t[i].item<int64_t>(), eps[i], s);
      CHECK(torch::allclose(xt[i], ref, 0, 1e-12));
    }
  }

  TEST_CASE("ddim endpoint and identity") {
    auto s = NoiseSchedule::linear(1000);
    auto x0 = torch::rand({2, 4, 4, 4}, torch::kFloat64);
    auto eps = torch::randn_like(x0);
    auto xt = q_sample(x0, 700, eps, s);
    CHECK(torch::equal(ddim_step(xt, x0, 700, -1, s, 0.0), x0));
    auto prev = ddim_step(xt, x0, 700, 350, s, 0.0);
    CHECK((prev - q_sample(x0, 350, eps, s)).abs().max().item<double>() < 1e-6);
    CHECK(torch::equal(prev, ddim_step(xt, x0, 700, 350, s, 0.0)));
    CHECK_THROWS_AS(ddim_step(xt, x0, 350, 700, s, 0.0), ConfigError);
    CHECK_THROWS(ddim_step(xt, x0, 700, 350, s, 0.5));
  }

  TEST_CASE("ddim clamps the prediction") {
    auto s = NoiseSchedule::linear(1000);
    auto xt = torch::randn({1, 2, 2, 2}, torch::kFloat64);
    auto wild = torch::full({1, 2, 2, 2}, 3.0, torch::kFloat64);
    CHECK(torch::equal(ddim_step(xt, wild, 10, -1, s, 0.0), torch::ones_like(xt)));
  }

  TEST_CASE("evenly spaced plans") {
    auto p = DdimPlan::evenly_spaced(1000, 10);
    REQUIRE(p.size() == 10);
    CHECK(p.timesteps.front() == 999);
    CHECK(p.timesteps.back() == 0);
    for (size_t i = 1; i < p.timesteps.size(); ++i) CHECK(p.timesteps[i] < p.timesteps[i - 1]);
    auto one = DdimPlan::evenly_spaced(1000, 1);
    REQUIRE(one.size() == 1);
    CHECK(one.timesteps[0] == 999);
    CHECK_THROWS(DdimPlan::evenly_spaced(10, 11));
  }

  TEST_CASE("sample loop records one prediction per step") {
    auto s = NoiseSchedule::linear(1000);
    auto fixed = torch::rand({1, 2, 3, 3, 3});
    int calls = 0;
    std::vector<int64_t> seen;
    Denoiser constant = [&](const torch::Tensor& x, int64_t t) {
      ++calls;
      seen.push_back(t);
      return fixed.expand_as(x).clone();
    };
    auto preds = sample_loop(constant, {1, 2, 3, 3, 3}, DdimPlan::evenly_spaced(1000, 5), s, 11);
    CHECK(preds.size() == 5);
    CHECK(calls == 5);
    CHECK(seen.front() == 999);
    for (const auto& p : preds) CHECK(torch::equal(p, fixed));

    auto a = sample_loop([](const torch::Tensor& x, int64_t) { return torch::sigmoid(x); }, {1, 2, 3, 3, 3},
                         DdimPlan::evenly_spaced(1000, 4), s, 5);
    auto b = sample_loop([](const torch::Tensor& x, int64_t) { return torch::sigmoid(x); }, {1, 2, 3, 3, 3},
                         DdimPlan::evenly_spaced(1000, 4), s, 5);
    for (size_t i = 0; i < a.size(); ++i) CHECK(torch::equal(a[i], b[i]));
  }

  TEST_CASE("K=1 records model(x_T, T-1)") {
    auto s = NoiseSchedule::linear(1000);
    Denoiser m = [](const torch::Tensor& x, int64_t t) { return torch::sigmoid(x * (1.0 + t * 1e-3)); };
    auto preds = sample_loop(m, {1, 2, 2, 2, 2}, DdimPlan::evenly_spaced(1000, 1), s, 9);
    REQUIRE(preds.size() == 1);
    auto gen = make_generator(9);
    auto x_T = torch::randn({1, 2, 2, 2, 2}, gen, torch::kFloat32);
    auto again = sample_loop(m, x_T, DdimPlan::evenly_spaced(1000, 1), s, make_generator(1));
    CHECK(torch::equal(again[0], m(x_T, 999)));
  }

  TEST_CASE("small Monte Carlo moments") {
    auto s = NoiseSchedule::linear(1000);
    auto gen = make_generator(21);
    const int64_t draws = 20000;
    auto x0 = torch::full({draws}, 0.8, torch::kFloat64);
    auto eps = torch::randn({draws}, gen, torch::kFloat64);
    auto xt = q_sample(x0, 1, eps, s);
    CHECK(xt.mean().item<double>() == doctest::Approx(std::sqrt(s.alpha_bar(1)) * 0.8).epsilon(0.02));
  }
}
