#include "testing.hpp"

#include "diffunet/error.hpp"
#include "diffunet/sliding_window.hpp"

using namespace diffunet;

TEST_SUITE("sliding_window") {
  TEST_CASE("tile enumeration") {
    auto exact = plan_tiles({96, 96, 96}, {96, 96, 96}, 0.5);
    REQUIRE(exact.positions.size() == 1);
    CHECK(exact.positions[0] == Shape3{0, 0, 0});
    auto eight = plan_tiles({144, 144, 144}, {96, 96, 96}, 0.5);
    CHECK(eight.positions.size() == 8);
    for (const auto& p : eight.positions) {
      for (auto v : p) CHECK((v == 0 || v == 48));
    }
    auto clamped = plan_tiles({40, 32, 32}, {32, 32, 32}, 0.5);
    REQUIRE(clamped.positions.size() == 2);
    CHECK(clamped.positions[1][0] == 8);
  }

  TEST_CASE("coverage on small shapes") {
    for (int64_t d = 3; d <= 11; d += 2) {
      for (double ov : {0.0, 0.25, 0.5, 0.75}) {
        auto plan = plan_tiles({d, 7, 5}, {4, 4, 4}, ov);
        auto hits = torch::zeros({plan.padded_shape[0], plan.padded_shape[1], plan.padded_shape[2]}, torch::kInt64);
        for (const auto& p : plan.positions) {
          hits.slice(0, p[0], p[0] + 4).slice(1, p[1], p[1] + 4).slice(2, p[2], p[2] + 4) += 1;
        }
        CHECK(hits.min().item<int64_t>() >= 1);
      }
    }
  }

  TEST_CASE("small volumes are padded symmetrically") {
    auto plan = plan_tiles({10, 16, 16}, {16, 16, 16}, 0.5);
    CHECK(plan.padded_shape == Shape3{16, 16, 16});
    CHECK(plan.pad_before[0] == 3);
    auto vol = torch::ones({1, 10, 16, 16});
    auto padded = pad_to_plan(vol, plan);
    CHECK(padded.sum().item<float>() == vol.sum().item<float>());
    CHECK(padded[0][2].sum().item<float>() == 0.0f);
    CHECK(padded[0][3].sum().item<float>() == 256.0f);
  }

  TEST_CASE("single tile returns the patch output") {
    auto plan = plan_tiles({8, 8, 8}, {8, 8, 8}, 0.5);
    auto out = torch::rand({2, 8, 8, 8});
    CHECK(torch::equal(stitch({out}, plan), out));
  }

  TEST_CASE("constant fields are seam-free under both blends") {
    for (auto blend : {BlendMode::kConstant, BlendMode::kGaussian}) {
      auto plan = plan_tiles({21, 17, 9}, {8, 8, 8}, 0.5, blend);
      std::vector<torch::Tensor> outs(plan.positions.size(), torch::full({2, 8, 8, 8}, 0.3f));
      auto y = stitch(outs, plan);
      CHECK(y.sizes() == torch::IntArrayRef{2, 21, 17, 9});
      CHECK((y - 0.3f).abs().max().item<float>() == 0.0f);
    }
  }

  TEST_CASE("two-tile overlap averages under constant blend") {
    auto plan = plan_tiles({6, 4, 4}, {4, 4, 4}, 0.5, BlendMode::kConstant);
    REQUIRE(plan.positions.size() == 2);
    auto y = stitch({torch::full({1, 4, 4, 4}, 1.0f), torch::full({1, 4, 4, 4}, 3.0f)}, plan);
    CHECK(y[0][0].mean().item<float>() == 1.0f);
    CHECK(y[0][2].mean().item<float>() == doctest::Approx(2.0));
    CHECK(y[0][3].mean().item<float>() == doctest::Approx(2.0));
    CHECK(y[0][5].mean().item<float>() == 3.0f);
  }

  TEST_CASE("gaussian weights") {
    auto w = blend_weights({8, 8, 8}, BlendMode::kGaussian);
    CHECK(w.max().item<double>() <= 1.0);
    CHECK(w.min().item<double>() >= 1e-3);
    CHECK(w[0][0][0].item<double>() < w[4][4][4].item<double>());
    CHECK(torch::equal(blend_weights({4, 4, 4}, BlendMode::kConstant), torch::ones({4, 4, 4}, torch::kFloat64)));
  }

  TEST_CASE("inference callback visits every tile in order") {
    auto plan = plan_tiles({12, 8, 8}, {8, 8, 8}, 0.5);
    auto vol = torch::arange(12 * 8 * 8, torch::kFloat32).reshape({1, 12, 8, 8});
    std::vector<size_t> seen;
    auto y = sliding_window_inference(vol, plan, [&](const torch::Tensor& patch, size_t i) {
      seen.push_back(i);
      return patch.clone();
    });
    CHECK(seen.size() == plan.positions.size());
    for (size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
    CHECK(torch::allclose(y, vol));
  }

  TEST_CASE("errors") {
    auto plan = plan_tiles({12, 8, 8}, {8, 8, 8}, 0.5);
    CHECK_THROWS(stitch({}, plan));
    CHECK_THROWS(stitch({torch::zeros({1, 8, 8, 8})}, plan));
    CHECK_THROWS(plan_tiles({8, 8, 8}, {8, 8, 8}, 1.0));
    CHECK_THROWS_AS(parse_blend("median"), ConfigError);
  }
}
