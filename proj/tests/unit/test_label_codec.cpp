#include "testing.hpp"

#include "diffunet/error.hpp"
#include "diffunet/label_codec.hpp"

using namespace diffunet;

TEST_SUITE("label_codec") {
  TEST_CASE("label 0 with three classes is the first channel") {
    LabelVolume l{torch::zeros({1, 1, 1}, torch::kInt64)};
    auto oh = encode_one_hot(l, 3).data;
    CHECK(oh.sizes() == torch::IntArrayRef{3, 1, 1, 1});
    CHECK(oh[0].item<float>() == 1.0f);
    CHECK(oh[1].item<float>() == 0.0f);
    CHECK(oh[2].item<float>() == 0.0f);
  }

  TEST_CASE("per-channel counts of a 2x2x1 volume") {
    LabelVolume l{torch::tensor({0, 1, 2, 1}, torch::kInt64).reshape({2, 2, 1})};
    auto oh = encode_one_hot(l, 3).data;
    auto sums = oh.sum({1, 2, 3});
    CHECK(sums[0].item<float>() == 1.0f);
    CHECK(sums[1].item<float>() == 2.0f);
    CHECK(sums[2].item<float>() == 1.0f);
    // exactly one hot channel per voxel
    CHECK(torch::equal(oh.sum(0), torch::ones({2, 2, 1})));
  }

  TEST_CASE("round trip on random volumes") {
    torch::manual_seed(3);
    for (int64_t n = 2; n <= 6; ++n) {
      LabelVolume l{torch::randint(0, n, {5, 4, 3}, torch::kInt64), {1.0, 2.0, 0.5}};
      auto back = decode_argmax(encode_one_hot(l, n).data, l.spacing);
      CHECK(torch::equal(back.data, l.data));
      CHECK(back.spacing == l.spacing);
    }
  }

  TEST_CASE("argmax ties go to the lower index") {
    auto p = torch::tensor({0.2f, 0.9f, 0.9f}).reshape({3, 1, 1, 1});
    CHECK(decode_argmax(p).data.item<int64_t>() == 1);
    auto all_equal = torch::full({4, 1, 1, 1}, 0.25f);
    CHECK(decode_argmax(all_equal).data.item<int64_t>() == 0);
  }

  TEST_CASE("threshold decoding") {
    auto p = torch::tensor({0.2f, 0.6f, 0.7f}).reshape({3, 1, 1, 1});
    auto m = decode_threshold(p, 0.5).flatten();
    CHECK(m[0].item<bool>() == false);
    CHECK(m[1].item<bool>() == true);
    CHECK(m[2].item<bool>() == true);
  }

  TEST_CASE("labels outside [0, N) are rejected") {
    LabelVolume l{torch::tensor({0, 3}, torch::kInt64).reshape({2, 1, 1})};
    CHECK_THROWS_AS(encode_one_hot(l, 3), OutOfRangeError);
    LabelVolume neg{torch::tensor({-1}, torch::kInt64).reshape({1, 1, 1})};
    CHECK_THROWS_AS(encode_one_hot(neg, 3), OutOfRangeError);
  }
}
