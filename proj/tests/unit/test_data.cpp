#include "testing.hpp"

#include "diffunet/dataset.hpp"
#include "diffunet/error.hpp"
#include "diffunet/patches.hpp"
#include "diffunet/phantom.hpp"
#include "diffunet/volume_io.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace diffunet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

PhantomSpec small_spec(uint64_t seed = 1) {
  PhantomSpec s;
  s.grid = {20, 16, 16};
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("golden little-endian float32 payload") {
    TempDir tmp("diffunet_golden");
    // struct.pack('<8f', 0, 1, -2, 0.5, 3.25, -0.125, 1024, 65504)
    const unsigned char bytes[] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00,
                                   0xc0, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x50, 0x40, 0x00, 0x00,
                                   0x00, 0xbe, 0x00, 0x00, 0x80, 0x44, 0x00, 0xe0, 0x7f, 0x47};
    std::ofstream(tmp.path / "g.json") << R"({"format": "diffunet-raw", "version": 1, "shape": [1, 2, 2, 2],
      "dtype": "float32", "spacing": [1.0, 1.0, 2.5], "modalities": 1, "byte_order": "little",
      "case_id": "golden", "payload": "g.raw"})";
    std::ofstream(tmp.path / "g.raw", std::ios::binary).write(reinterpret_cast<const char*>(bytes), sizeof bytes);
    auto v = read_raw_volume(tmp.path / "g.json");
    auto expected = torch::tensor({0.0f, 1.0f, -2.0f, 0.5f, 3.25f, -0.125f, 1024.0f, 65504.0f}).reshape({1, 2, 2, 2});
    CHECK(torch::equal(v.data, expected));
    CHECK(v.header.spacing[2] == 2.5);
    CHECK(v.header.case_id == "golden");
  }

  TEST_CASE("write/read round trip and decode errors") {
    TempDir tmp("diffunet_io");
    auto data = torch::randn({2, 3, 4, 5});
    write_raw_volume(tmp.path / "a", data, VolumeDType::kFloat32, {1.0, 0.5, 2.0}, "a");
    CHECK(torch::equal(read_raw_volume(tmp.path / "a").data, data));
    auto labels = torch::randint(0, 4, {3, 4, 5}, torch::kUInt8);
    write_raw_volume(tmp.path / "l", labels, VolumeDType::kUInt8, {1, 1, 1}, "l");
    CHECK(torch::equal(read_raw_volume(tmp.path / "l.json").data[0], labels));

    fs::resize_file(tmp.path / "a.raw", 17);
    CHECK_THROWS_AS(read_raw_volume(tmp.path / "a"), FormatError);
    CHECK_THROWS_AS(read_raw_volume(tmp.path / "missing"), IoError);
    std::ofstream(tmp.path / "bad.json") << "{not json";
    CHECK_THROWS_AS(read_raw_volume(tmp.path / "bad"), FormatError);
    std::ofstream(tmp.path / "f64.json") << R"({"format": "diffunet-raw", "shape": [1,1,1,1], "dtype": "float64",
      "spacing": [1,1,1], "payload": "f64.raw"})";
    CHECK_THROWS_AS(read_raw_volume(tmp.path / "f64"), FormatError);
  }

  TEST_CASE("phantoms are deterministic, complete and nested") {
    auto a = generate_phantom(small_spec(4), "p");
    auto b = generate_phantom(small_spec(4), "p");
    CHECK(torch::equal(a.image.data, b.image.data));
    CHECK(torch::equal(a.labels.data, b.labels.data));
    CHECK_FALSE(torch::equal(a.labels.data, generate_phantom(small_spec(5), "p").labels.data));
    for (int64_t c = 0; c < 4; ++c) CHECK((a.labels.data == c).any().item<bool>());
    for (int64_t k = 1; k + 1 < 4; ++k) {
      auto inner = a.labels.data >= (k + 1);
      auto outer = a.labels.data >= k;
      CHECK_FALSE(inner.logical_and(outer.logical_not()).any().item<bool>());
    }
    for (auto family : {ShapeFamily::kBoxes}) {
      auto s = small_spec(2);
      s.family = family;
      s.num_classes = 2;
      auto r = generate_phantom(s, "box");
      CHECK((r.labels.data == 1).any().item<bool>());
    }
    auto tiny = small_spec();
    tiny.grid = {3, 16, 16};
    CHECK_THROWS_AS(generate_phantom(tiny, "t"), ConfigError);
  }

  TEST_CASE("intensity normalization over nonzero voxels") {
    ImageVolume img{torch::tensor({0.0f, 2.0f, 4.0f, 6.0f}).reshape({1, 1, 2, 2})};
    normalize_intensity(img);
    CHECK(img.data.flatten()[0].item<float>() == 0.0f);
    auto nz = img.data.flatten().slice(0, 1);
    CHECK(nz.mean().item<float>() == doctest::Approx(0.0).epsilon(1e-6));
    REQUIRE(img.normalization.size() == 1);
    CHECK(img.normalization[0].mean == doctest::Approx(4.0));
  }

  TEST_CASE("patch sampling") {
    auto rec = generate_phantom(small_spec(), "p");
    auto same = sample_patches(rec, {20, 16, 16}, 1, 3, 0.5);
    CHECK(torch::equal(same[0].labels, rec.labels.data));
    CHECK(same[0].offset == Shape3{0, 0, 0});

    // a marker voxel travels with its crop
    auto marked = rec;
    marked.image.data = torch::zeros_like(rec.image.data);
    marked.labels.data = torch::zeros_like(rec.labels.data);
    marked.image.data.index_put_({0, 10, 8, 8}, 7.0f);
    marked.labels.data.index_put_({10, 8, 8}, 1);
    for (const auto& p : sample_patches(marked, {8, 8, 8}, 20, 11, 1.0)) {
      CHECK(torch::equal(p.image[0] == 7.0f, p.labels == 1));
    }

    // fg_bias = 0: offsets along axis 0 spread evenly over 0..12
    std::vector<int> counts(13, 0);
    const int draws = 6500;
    for (const auto& p : sample_patches(rec, {8, 16, 16}, draws, 5, 0.0)) ++counts[static_cast<size_t>(p.offset[0])];
    double chi2 = 0.0;
    const double expected = draws / 13.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 32.9);  // chi-square, 12 dof, p = 0.001

    auto padded = sample_patches(rec, {32, 32, 32}, 1, 1, 0.5);
    CHECK(padded[0].labels.sizes() == torch::IntArrayRef{32, 32, 32});
  }

  TEST_CASE("augmentation") {
    auto rec = generate_phantom(small_spec(), "p");
    TrainingPatch patch{rec.image.data.slice(1, 0, 16), rec.labels.data.slice(0, 0, 16), {}};
    auto id = apply_augment(patch, AugmentDraw{});
    CHECK(torch::equal(id.image, patch.image));
    CHECK(torch::equal(id.labels, patch.labels));

    AugmentDraw flip;
    flip.flip = {false, true, false};
    auto twice = apply_augment(apply_augment(patch, flip), flip);
    CHECK(torch::equal(twice.labels, patch.labels));
    CHECK(torch::equal(twice.image, patch.image));

    auto hist = [](const torch::Tensor& l) { return torch::bincount(l.flatten(), {}, 4); };
    for (uint64_t s = 0; s < 20; ++s) {
      auto aug = augment(patch, s);
      CHECK(torch::equal(hist(aug.labels), hist(patch.labels)));
      CHECK(aug.labels.sizes() == patch.labels.sizes());
    }
  }

  TEST_CASE("split counts and manifests") {
    auto c = split_counts(10, {0.7, 0.1, 0.2});
    CHECK(c == std::array<int64_t, 3>{7, 1, 2});
    CHECK(split_counts(6, {0.67, 0.33, 0.0}) == std::array<int64_t, 3>{4, 2, 0});
    std::vector<CaseEntry> cases;
    for (int i = 0; i < 10; ++i) cases.push_back({"c" + std::to_string(i), "i", "l"});
    auto m1 = make_manifest(cases, {0.7, 0.1, 0.2}, 3);
    auto m2 = make_manifest(cases, {0.7, 0.1, 0.2}, 3);
    CHECK(m1.splits == m2.splits);
    CHECK(m1.splits.at("train").size() == 7);
    std::set<std::string> all;
    for (const auto& [k, ids] : m1.splits) all.insert(ids.begin(), ids.end());
    CHECK(all.size() == 10);

    TempDir tmp("diffunet_manifest");
    write_manifest(m1, tmp.path);
    CHECK(read_manifest(tmp.path).splits == m1.splits);
    CHECK_THROWS_AS(read_manifest(tmp.path / "nowhere"), IoError);
  }

  TEST_CASE("load_split names the failing case") {
    TempDir tmp("diffunet_split");
    auto rec = generate_phantom(small_spec(), "ok");
    write_record(rec, tmp.path);
    std::vector<CaseEntry> cases{{"ok", "ok_image.json", "ok_label.json"}, {"gone", "gone_image.json", "gone_label.json"}};
    auto m = make_manifest(cases, {1.0, 0.0, 0.0}, 0);
    try {
      load_split(tmp.path, m, "train");
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("gone") != std::string::npos);
    }
  }
}
