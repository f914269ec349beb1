#pragma once

#include "diffunet/volume.hpp"

#include <torch/torch.h>

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace diffunet {

/// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice_score(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask);

/// Mask voxels with at least one face-adjacent background neighbour
/// (outside the grid counts as background).
torch::Tensor surface_mask(const torch::Tensor& mask);

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// set voxel of `features`, respecting anisotropic spacing. Infinite when
/// `features` is empty.
torch::Tensor squared_distance_transform(const torch::Tensor& features, const Spacing& spacing);

/// Linear interpolation between order statistics; q in [0, 1].
double percentile(std::vector<double> values, double q);

/// 95th percentile of the pooled directed surface-to-surface nearest
/// distances in mm. Both empty -> 0; exactly one empty -> nullopt (logged).
std::optional<double> hd95(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask, const Spacing& spacing);

/// An evaluation region: the union of some class labels.
struct Region {
  std::string name;
  std::vector<int64_t> labels;
};

struct RegionSpec {
  int64_t num_classes = 2;
  std::vector<Region> regions;

  /// One region per foreground class ("class1", ...).
  static RegionSpec per_class(int64_t num_classes);
  /// Nested regions "region1" = {1..N-1}, "region2" = {2..N-1}, ...; the
  /// WT / TC / ET construction for a three-level phantom.
  static RegionSpec nested(int64_t num_classes);
  static RegionSpec from_name(const std::string& name, int64_t num_classes);

  std::vector<std::string> names() const;
};

struct RegionScore {
  std::string name;
  double dice = 0.0;
  std::optional<double> hd95;  // nullopt = undefined (one side empty)
};

struct RegionReport {
  std::vector<RegionScore> regions;
  double mean_dice = 0.0;
  std::optional<double> mean_hd95;  // over defined hd95 values only
};

RegionReport region_report(const LabelVolume& pred, const LabelVolume& gt, const RegionSpec& spec);

/// Region-wise average of several reports (cases), same region order.
RegionReport average_reports(const std::vector<RegionReport>& reports);

struct MetricsRow {
  std::string name;
  RegionReport report;
};

/// Writes `<stem>.csv` (region Dice/HD95 column pairs plus Average) and
/// `<stem>.json`. Undefined HD95 is "NA" in CSV and null in JSON.
void write_metrics_table(const std::filesystem::path& stem, const std::vector<MetricsRow>& rows);

nlohmann::json to_json(const RegionReport& report);

}  // namespace diffunet
