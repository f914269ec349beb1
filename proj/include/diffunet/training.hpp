#pragma once

#include "diffunet/checkpoint.hpp"
#include "diffunet/diffusion.hpp"
#include "diffunet/inference.hpp"
#include "diffunet/losses.hpp"
#include "diffunet/model.hpp"
#include "diffunet/patches.hpp"

#include <torch/torch.h>

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace diffunet {

struct TrainConfig {
  int64_t epochs = 200;
  double base_lr = 2e-3;
  double weight_decay = 1e-5;
  double warmup_fraction = 0.1;
  int64_t batch_size = 4;
  int64_t patches_per_case = 1;  // crops per training case per epoch
  Shape3 patch_size{32, 32, 32};
  double fg_bias = 0.5;
  bool augment = true;
  double grad_clip = 1.0;  // max global grad norm; <= 0 disables
  uint64_t seed = 0;
  int64_t val_interval = 10;  // epochs between validations (the last epoch always validates)
  InferenceOptions validation;  // K = 10, S = 4 by default

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& train, const nlohmann::json& validation_inference,
                                   const nlohmann::json& validation_fusion);
nlohmann::json to_json(const DiffusionConfig& cfg);
DiffusionConfig diffusion_config_from_json(const nlohmann::json& j);

/// Linear warmup to base_lr over [0, w], then cosine annealing to 0 at 1.
double lr_at(double progress, const TrainConfig& cfg);

/// Uniform timesteps in [0, steps), one per batch element.
torch::Tensor sample_timesteps(int64_t batch, int64_t steps, at::Generator& gen);

struct StepReport {
  LossReport loss;
  double lr = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
};

struct FitResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_val_dice = -1.0;
  std::vector<StepReport> steps;  // steps run by this call
};

/// Owns model, AdamW state and the torch generator used for timestep and
/// noise draws. Data sampling uses per-(epoch, case) seeds, so a run resumed
/// at an epoch boundary reproduces the uninterrupted one.
class Trainer {
 public:
  Trainer(ModelConfig model_cfg, TrainConfig train_cfg, DiffusionConfig diffusion_cfg,
          nlohmann::json run_config = nlohmann::json::object());

  /// Rebuilds model, optimizer, counters and RNG state from a checkpoint.
  static Trainer from_checkpoint(const std::filesystem::path& path);

  /// One optimizer update on a batch of aligned patches. Throws NumericError
  /// (without touching the weights) when the loss is not finite.
  StepReport train_step(const std::vector<TrainingPatch>& batch);

  /// Augmented crops for one epoch, shuffled and grouped into batches.
  std::vector<std::vector<TrainingPatch>> epoch_batches(const std::vector<VolumeRecord>& train, int64_t epoch) const;

  int64_t steps_per_epoch(size_t train_cases) const;

  /// Runs the remaining epochs. Writes `last.ckpt` every epoch, `best.ckpt`
  /// on validation improvement (or mirrors last when there is no val split),
  /// and appends JSON lines to `train_log.jsonl`. `stop_after` ends the call
  /// early at that epoch count without changing the schedule.
  FitResult fit(const std::vector<VolumeRecord>& train, const std::vector<VolumeRecord>& val,
                const std::filesystem::path& out_dir, std::optional<int64_t> stop_after = std::nullopt);

  SplitEvaluation validate(const std::vector<VolumeRecord>& val);

  void save(const std::filesystem::path& path) const;
  void set_learning_rate(double lr);

  DiffUNet& model() { return model_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const TrainingState& state() const { return state_; }
  nlohmann::json config_echo() const;

 private:
  ModelConfig model_cfg_;
  TrainConfig train_cfg_;
  DiffusionConfig diffusion_cfg_;
  NoiseSchedule sched_;
  nlohmann::json run_config_;
  DiffUNet model_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  mutable at::Generator gen_;
  TrainingState state_;
};

}  // namespace diffunet
