#include "diffunet/metrics.hpp"

#include "diffunet/error.hpp"
#include "diffunet/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace diffunet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_masks(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 3 || !a.sizes().equals(b.sizes())) {
    throw ShapeError("masks must be 3-D with equal shapes, got " + std::string(c10::str(a.sizes())) + " and " +
                     std::string(c10::str(b.sizes())));
  }
}

// Lower envelope of parabolas s2 * (q - p)^2 + f[p] over one line.
void distance_1d(const std::vector<double>& f, std::vector<double>& out, double s2, std::vector<int64_t>& v,
                 std::vector<double>& z) {
  const auto n = static_cast<int64_t>(f.size());
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const auto p = v[k];
      s = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * static_cast<double>(q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  k = 0;
  for (int64_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q - v[k]);
    out[q] = s2 * d * d + f[v[k]];
  }
}

}  // namespace

double dice_score(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask) {
  check_masks(pred_mask, gt_mask);
  auto a = pred_mask.to(torch::kBool);
  auto b = gt_mask.to(torch::kBool);
  const auto size_a = a.sum().item<int64_t>();
  const auto size_b = b.sum().item<int64_t>();
  if (size_a + size_b == 0) return 1.0;
  const auto inter = a.logical_and(b).sum().item<int64_t>();
  return 2.0 * static_cast<double>(inter) / static_cast<double>(size_a + size_b);
}

torch::Tensor surface_mask(const torch::Tensor& mask) {
  if (mask.dim() != 3) throw ShapeError("surface_mask expects a 3-D mask");
  auto m = mask.to(torch::kBool);
  auto padded = torch::constant_pad_nd(m.to(torch::kUInt8), {1, 1, 1, 1, 1, 1}, 0).to(torch::kBool);
  using torch::indexing::Slice;
  const auto D = m.size(0), W = m.size(1), H = m.size(2);
  auto interior = torch::ones_like(m);
  const int64_t offsets[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (const auto& o : offsets) {
    interior = interior.logical_and(padded.index({Slice(1 + o[0], 1 + o[0] + D), Slice(1 + o[1], 1 + o[1] + W),
                                                  Slice(1 + o[2], 1 + o[2] + H)}));
  }
  return m.logical_and(interior.logical_not());
}

torch::Tensor squared_distance_transform(const torch::Tensor& features, const Spacing& spacing) {
  if (features.dim() != 3) throw ShapeError("distance transform expects a 3-D mask");
  const std::array<int64_t, 3> dims{features.size(0), features.size(1), features.size(2)};
  auto grid = torch::where(features.to(torch::kBool), torch::zeros(features.sizes(), torch::kFloat64),
                           torch::full(features.sizes(), kInf, torch::kFloat64))
                  .contiguous();
  double* data = grid.data_ptr<double>();
  const std::array<int64_t, 3> strides{dims[1] * dims[2], dims[2], 1};
  for (size_t axis = 0; axis < 3; ++axis) {
    const int64_t n = dims[axis];
    const double s2 = spacing[axis] * spacing[axis];
    std::vector<double> f(static_cast<size_t>(n)), out(static_cast<size_t>(n));
    std::vector<int64_t> v(static_cast<size_t>(n));
    std::vector<double> z(static_cast<size_t>(n) + 1);
    const size_t a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int64_t i = 0; i < dims[a1]; ++i) {
      for (int64_t j = 0; j < dims[a2]; ++j) {
        double* line = data + i * strides[a1] + j * strides[a2];
        for (int64_t q = 0; q < n; ++q) f[q] = line[q * strides[axis]];
        distance_1d(f, out, s2, v, z);
        for (int64_t q = 0; q < n; ++q) line[q * strides[axis]] = out[q];
      }
    }
  }
  return grid;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = static_cast<size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::optional<double> hd95(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask, const Spacing& spacing) {
  check_masks(pred_mask, gt_mask);
  auto a = pred_mask.to(torch::kBool);
  auto b = gt_mask.to(torch::kBool);
  const bool empty_a = !a.any().item<bool>();
  const bool empty_b = !b.any().item<bool>();
  if (empty_a && empty_b) return 0.0;
  if (empty_a || empty_b) {
    log_warn(std::string("hd95 undefined: ") + (empty_a ? "prediction" : "reference") + " mask is empty");
    return std::nullopt;
  }
  auto surf_a = surface_mask(a);
  auto surf_b = surface_mask(b);
  auto to_b = squared_distance_transform(surf_b, spacing).masked_select(surf_a);
  auto to_a = squared_distance_transform(surf_a, spacing).masked_select(surf_b);
  auto pooled = torch::cat({to_b, to_a}).sqrt().contiguous();
  std::vector<double> values(pooled.data_ptr<double>(), pooled.data_ptr<double>() + pooled.numel());
  return percentile(std::move(values), 0.95);
}

RegionSpec RegionSpec::per_class(int64_t num_classes) {
  RegionSpec spec;
  spec.num_classes = num_classes;
  for (int64_t c = 1; c < num_classes; ++c) spec.regions.push_back({"class" + std::to_string(c), {c}});
  return spec;
}

RegionSpec RegionSpec::nested(int64_t num_classes) {
  RegionSpec spec;
  spec.num_classes = num_classes;
  for (int64_t k = 1; k < num_classes; ++k) {
    Region region{"region" + std::to_string(k), {}};
    for (int64_t c = k; c < num_classes; ++c) region.labels.push_back(c);
    spec.regions.push_back(std::move(region));
  }
  return spec;
}

RegionSpec RegionSpec::from_name(const std::string& name, int64_t num_classes) {
  if (name == "per_class") return per_class(num_classes);
  if (name == "nested") return nested(num_classes);
  throw ConfigError("unknown region spec '" + name + "' (expected per_class|nested)");
}

std::vector<std::string> RegionSpec::names() const {
  std::vector<std::string> out;
  for (const auto& r : regions) out.push_back(r.name);
  return out;
}

RegionReport region_report(const LabelVolume& pred, const LabelVolume& gt, const RegionSpec& spec) {
  if (!pred.data.sizes().equals(gt.data.sizes())) throw ShapeError("prediction and reference shapes differ");
  RegionReport report;
  double dice_sum = 0.0, hd_sum = 0.0;
  int64_t hd_count = 0;
  for (const auto& region : spec.regions) {
    auto pm = torch::zeros(pred.data.sizes(), torch::kBool);
    auto gm = torch::zeros(gt.data.sizes(), torch::kBool);
    for (auto label : region.labels) {
      if (label < 0 || label >= spec.num_classes) {
        throw OutOfRangeError("region '" + region.name + "' names unknown label " + std::to_string(label));
      }
      pm = pm.logical_or(pred.data == label);
      gm = gm.logical_or(gt.data == label);
    }
    RegionScore score{region.name, dice_score(pm, gm), hd95(pm, gm, gt.spacing)};
    dice_sum += score.dice;
    if (score.hd95) {
      hd_sum += *score.hd95;
      ++hd_count;
    }
    report.regions.push_back(std::move(score));
  }
  if (!report.regions.empty()) report.mean_dice = dice_sum / static_cast<double>(report.regions.size());
  if (hd_count > 0) report.mean_hd95 = hd_sum / static_cast<double>(hd_count);
  return report;
}

RegionReport average_reports(const std::vector<RegionReport>& reports) {
  RegionReport avg;
  if (reports.empty()) return avg;
  const auto n_regions = reports.front().regions.size();
  double dice_total = 0.0, hd_total = 0.0;
  int64_t hd_regions = 0;
  for (size_t r = 0; r < n_regions; ++r) {
    RegionScore score{reports.front().regions[r].name, 0.0, std::nullopt};
    double hd = 0.0;
    int64_t hd_count = 0;
    for (const auto& rep : reports) {
      if (rep.regions.size() != n_regions || rep.regions[r].name != score.name) {
        throw ShapeError("cannot average reports with different regions");
      }
      score.dice += rep.regions[r].dice;
      if (rep.regions[r].hd95) {
        hd += *rep.regions[r].hd95;
        ++hd_count;
      }
    }
    score.dice /= static_cast<double>(reports.size());
    if (hd_count > 0) score.hd95 = hd / static_cast<double>(hd_count);
    dice_total += score.dice;
    if (score.hd95) {
      hd_total += *score.hd95;
      ++hd_regions;
    }
    avg.regions.push_back(std::move(score));
  }
  if (n_regions > 0) avg.mean_dice = dice_total / static_cast<double>(n_regions);
  if (hd_regions > 0) avg.mean_hd95 = hd_total / static_cast<double>(hd_regions);
  return avg;
}

nlohmann::json to_json(const RegionReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : report.regions) regions.push_back({{"region", r.name}, {"dice", r.dice}, {"hd95", opt(r.hd95)}});
  return {{"regions", regions}, {"average", {{"dice", report.mean_dice}, {"hd95", opt(report.mean_hd95)}}}};
}

void write_metrics_table(const std::filesystem::path& stem, const std::vector<MetricsRow>& rows) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto csv_path = stem;
  csv_path += ".csv";
  auto json_path = stem;
  json_path += ".json";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    std::ostringstream os;
    os << std::setprecision(6) << *v;
    return os.str();
  };
  csv << "name";
  if (!rows.empty()) {
    for (const auto& r : rows.front().report.regions) csv << ',' << r.name << " Dice," << r.name << " HD95";
  }
  csv << ",Average Dice,Average HD95\n";
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& row : rows) {
    csv << row.name;
    for (const auto& r : row.report.regions) csv << ',' << fmt(r.dice) << ',' << fmt(r.hd95);
    csv << ',' << fmt(row.report.mean_dice) << ',' << fmt(row.report.mean_hd95) << '\n';
    auto entry = to_json(row.report);
    entry["name"] = row.name;
    doc.push_back(entry);
  }
  std::ofstream json(json_path);
  if (!json) throw IoError("cannot write " + json_path.string());
  json << doc.dump(2) << '\n';
}

}  // namespace diffunet
