#include "diffunet/phantom.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <random>

namespace diffunet {

ShapeFamily parse_shape_family(const std::string& name) {
  if (name == "ellipsoids") return ShapeFamily::kEllipsoids;
  if (name == "boxes") return ShapeFamily::kBoxes;
  throw ConfigError("unknown phantom shape family '" + name + "' (expected ellipsoids|boxes)");
}

double phantom_intensity(int64_t modality, int64_t label, int64_t num_classes) {
  // Alternate contrast direction between modalities.
  const int64_t rank = modality % 2 == 0 ? label : num_classes - 1 - label;
  return 1.0 + static_cast<double>(rank) * (1.0 + 0.25 * static_cast<double>(modality));
}

VolumeRecord generate_phantom(const PhantomSpec& spec, const std::string& case_id) {
  if (spec.num_classes < 2) throw ConfigError("phantom needs at least 2 classes");
  if (spec.modalities < 1) throw ConfigError("phantom needs at least 1 modality");
  for (auto d : spec.grid) {
    if (d < 4) throw ConfigError("degenerate phantom grid: every dim must be >= 4");
  }
  std::mt19937_64 rng(derive_seed(spec.seed, {0x9a7ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::array<double, 3> centre{}, radius{};
  for (size_t a = 0; a < 3; ++a) {
    const auto n = static_cast<double>(spec.grid[a]);
    centre[a] = (n - 1.0) / 2.0 + (unit(rng) - 0.5) * 0.2 * n;
    radius[a] = (0.30 + 0.08 * unit(rng)) * n;
  }
  // Shrink factor per nesting level, strictly decreasing.
  const int64_t levels = spec.num_classes - 1;
  std::vector<double> factor(static_cast<size_t>(levels));
  for (int64_t k = 0; k < levels; ++k) {
    const double base = 1.0 - 0.6 * static_cast<double>(k) / static_cast<double>(levels);
    factor[static_cast<size_t>(k)] = k == 0 ? 1.0 : base + (unit(rng) - 0.5) * 0.06;
  }

  const auto D = spec.grid[0], W = spec.grid[1], H = spec.grid[2];
  auto labels = torch::zeros({D, W, H}, torch::kInt64);
  auto acc = labels.accessor<int64_t, 3>();
  for (int64_t z = 0; z < D; ++z) {
    for (int64_t y = 0; y < W; ++y) {
      for (int64_t x = 0; x < H; ++x) {
        const std::array<double, 3> p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        int64_t label = 0;
        for (int64_t k = 0; k < levels; ++k) {
          double dist = 0.0;
          for (size_t a = 0; a < 3; ++a) {
            const double r = std::abs(p[a] - centre[a]) / (radius[a] * factor[static_cast<size_t>(k)]);
            dist = spec.family == ShapeFamily::kEllipsoids ? dist + r * r : std::max(dist, r);
          }
          if (dist <= 1.0) label = k + 1;
        }
        acc[z][y][x] = label;
      }
    }
  }
  auto counts = torch::bincount(labels.flatten(), {}, spec.num_classes);
  if ((counts == 0).any().item<bool>()) {
    throw ConfigError("degenerate phantom grid: some class has no voxels at grid " + std::to_string(D) + "x" +
                      std::to_string(W) + "x" + std::to_string(H));
  }

  auto gen = make_generator(derive_seed(spec.seed, {0x1a9eULL}));
  auto image = torch::empty({spec.modalities, D, W, H}, torch::kFloat32);
  for (int64_t m = 0; m < spec.modalities; ++m) {
    std::vector<double> table;
    for (int64_t c = 0; c < spec.num_classes; ++c) table.push_back(phantom_intensity(m, c, spec.num_classes));
    auto means = torch::tensor(table, torch::kFloat64).index_select(0, labels.flatten()).view({D, W, H});
    auto noise = torch::randn({D, W, H}, gen, torch::kFloat64) * spec.noise;
    image[m].copy_(means + noise);
  }

  VolumeRecord record;
  record.case_id = case_id;
  record.image.data = image;
  record.labels.data = labels;
  record.labels.spacing = spec.spacing;
  return record;
}

}  // namespace diffunet
