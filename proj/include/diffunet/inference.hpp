#pragma once

#include "diffunet/diffusion.hpp"
#include "diffunet/label_codec.hpp"
#include "diffunet/metrics.hpp"
#include "diffunet/model.hpp"
#include "diffunet/sliding_window.hpp"
#include "diffunet/suf.hpp"
#include "diffunet/volume_io.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace diffunet {

struct InferenceOptions {
  Shape3 patch_size{32, 32, 32};
  double overlap = 0.5;
  BlendMode blend = BlendMode::kGaussian;
  int64_t ddim_steps = 10;
  double eta = 0.0;
  FusionConfig fusion;
  bool diagnostics = false;  // keep stitched per-step uncertainty and weight maps
};

nlohmann::json to_json(const InferenceOptions& opts);
InferenceOptions inference_options_from_json(const nlohmann::json& inference, const nlohmann::json& fusion);

/// Binds a (M, p, p, p) image patch to the model. Feature-encoder features
/// are computed once and reused for every call; `zero_features` drops them
/// (DU-only path, the "basic" ablation arm).
Denoiser bind_model(DiffUNet& model, const torch::Tensor& image_patch, bool zero_features = false);

struct CasePrediction {
  torch::Tensor probabilities;  // (N, D, W, H)
  LabelVolume labels;
  torch::Tensor step_uncertainty;  // (K, N, D, W, H) when diagnostics are on
  torch::Tensor step_weight;
};

/// Sliding-window SUF inference over a whole case; fusion happens per patch,
/// stitching on fused probabilities. Patch j uses seed derive_seed(seed, {j}).
CasePrediction predict_case(DiffUNet& model, const NoiseSchedule& sched, const ImageVolume& image,
                            const Spacing& spacing, const InferenceOptions& opts, uint64_t seed);

/// Ablation output arms computed from one shared set of trajectories.
enum class ArmKind {
  kLastStep,  // trajectory 0's final-step prediction (plain DDIM)
  kSimple,    // unweighted mean over steps of p_bar_i
  kSuf,       // step-uncertainty fusion
};

struct ArmSpec {
  std::string name;
  ArmKind kind = ArmKind::kSuf;
  int64_t samples = 4;  // trajectories used (prefix of the shared set)
};

/// Runs max(samples) trajectories per patch once and evaluates every arm on
/// it; SUF/SF arms with s samples use trajectories [0, s). Returns one
/// stitched probability volume per arm.
std::vector<torch::Tensor> predict_case_arms(DiffUNet& model, const NoiseSchedule& sched, const ImageVolume& image,
                                             const InferenceOptions& opts, const std::vector<ArmSpec>& arms,
                                             uint64_t seed, bool zero_features = false);

/// Mean foreground Dice over cases and classes plus per-case reports.
struct SplitEvaluation {
  double mean_dice = 0.0;
  std::vector<RegionReport> reports;
};

SplitEvaluation evaluate_records(DiffUNet& model, const NoiseSchedule& sched, const std::vector<VolumeRecord>& records,
                                 const InferenceOptions& opts, uint64_t seed);

}  // namespace diffunet
