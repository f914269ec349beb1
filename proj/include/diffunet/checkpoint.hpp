#pragma once

#include "diffunet/model.hpp"

#include <torch/torch.h>

#include "json.hpp"

#include <cstdint>
#include <filesystem>

namespace diffunet {

/// Progress counters and RNG state carried across a save/resume.
struct TrainingState {
  int64_t epoch = 0;        // completed epochs
  int64_t global_step = 0;  // completed optimizer steps
  double best_val_dice = -1.0;
  torch::Tensor generator_state;  // torch CPU generator state, may be undefined
  nlohmann::json info = nlohmann::json::object();
};

struct LoadedCheckpoint {
  DiffUNet model{nullptr};
  nlohmann::json config;  // resolved run config echo; config["model"] rebuilds the net
  TrainingState state;
};

/// Single-file archive: config echo, named parameters, optimizer state,
/// counters and generator state. Written to a temp file and renamed.
void save_checkpoint(const std::filesystem::path& path, DiffUNet& model, const nlohmann::json& config,
                     torch::optim::Optimizer* optimizer, const TrainingState& state);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores optimizer moments and step counts saved alongside the model.
void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace diffunet
