#pragma once

#include "diffunet/config.hpp"
#include "diffunet/dataset.hpp"
#include "diffunet/metrics.hpp"
#include "diffunet/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace diffunet {

/// Phantom dataset plus manifest under data.dir. Refuses a non-empty target
/// unless `force` is set, in which case the directory is replaced.
Manifest cmd_gen_data(const RunConfig& cfg, bool force);

/// Trains on the manifest's train split, validating on val. Resumes from
/// train.resume when it is set.
FitResult cmd_train(const RunConfig& cfg);

/// Writes `<case>_prob` (fused probabilities) and `<case>_pred` (argmax
/// labels) per case of inference.split; returns the prediction stems.
std::vector<std::filesystem::path> cmd_infer(const RunConfig& cfg, bool export_slices);

/// Metrics table over eval.split: one row per case plus "Average".
std::vector<MetricsRow> cmd_eval(const RunConfig& cfg);

struct AblationRow {
  std::string name;
  double mean_dice = 0.0;
  std::optional<double> mean_hd95;
  std::optional<double> reference;  // published figure, context only
};

struct AblationReport {
  std::vector<AblationRow> modules;  // basic, +FE, +FE+SF, +FE+SUF
  std::vector<AblationRow> samples;  // SUF at each S of ablate.samples

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

AblationReport cmd_ablate(const RunConfig& cfg);

/// Mid-axial overlay (image | ground truth | prediction) as a binary PPM.
void write_overlay_ppm(const std::filesystem::path& path, const torch::Tensor& image, const torch::Tensor& gt,
                       const torch::Tensor& pred);

}  // namespace diffunet
