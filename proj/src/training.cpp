#include "diffunet/training.hpp"

#include "diffunet/error.hpp"
#include "diffunet/label_codec.hpp"
#include "diffunet/log.hpp"
#include "diffunet/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

namespace diffunet {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ConfigError("train.warmup_fraction must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (patches_per_case < 1) throw ConfigError("train.patches_per_case must be >= 1");
  if (!(fg_bias >= 0.0 && fg_bias <= 1.0)) throw ConfigError("train.fg_bias must lie in [0, 1]");
  if (val_interval < 1) throw ConfigError("train.val_interval must be >= 1");
  for (auto p : patch_size) {
    if (p < 1) throw ConfigError("train.patch_size must be positive");
  }
  validation.fusion.validate();
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"base_lr", cfg.base_lr},
          {"weight_decay", cfg.weight_decay},
          {"warmup_fraction", cfg.warmup_fraction},
          {"batch_size", cfg.batch_size},
          {"patches_per_case", cfg.patches_per_case},
          {"patch_size", cfg.patch_size},
          {"fg_bias", cfg.fg_bias},
          {"augment", cfg.augment},
          {"grad_clip", cfg.grad_clip},
          {"seed", cfg.seed},
          {"val_interval", cfg.val_interval},
          {"validation", to_json(cfg.validation)}};
}

TrainConfig train_config_from_json(const nlohmann::json& train, const nlohmann::json& validation_inference,
                                   const nlohmann::json& validation_fusion) {
  TrainConfig cfg;
  try {
    cfg.epochs = train.at("epochs").get<int64_t>();
    cfg.base_lr = train.at("base_lr").get<double>();
    cfg.weight_decay = train.at("weight_decay").get<double>();
    cfg.warmup_fraction = train.at("warmup_fraction").get<double>();
    cfg.batch_size = train.at("batch_size").get<int64_t>();
    cfg.patches_per_case = train.at("patches_per_case").get<int64_t>();
    cfg.patch_size = train.at("patch_size").get<Shape3>();
    cfg.fg_bias = train.at("fg_bias").get<double>();
    cfg.augment = train.at("augment").get<bool>();
    cfg.grad_clip = train.at("grad_clip").get<double>();
    cfg.seed = train.at("seed").get<uint64_t>();
    cfg.val_interval = train.at("val_interval").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  cfg.validation = inference_options_from_json(validation_inference, validation_fusion);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const DiffusionConfig& cfg) {
  return {{"steps", cfg.steps}, {"beta_start", cfg.beta_start}, {"beta_end", cfg.beta_end}};
}

DiffusionConfig diffusion_config_from_json(const nlohmann::json& j) {
  DiffusionConfig cfg;
  try {
    cfg.steps = j.at("steps").get<int64_t>();
    cfg.beta_start = j.at("beta_start").get<double>();
    cfg.beta_end = j.at("beta_end").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad diffusion config: ") + e.what());
  }
  return cfg;
}

double lr_at(double progress, const TrainConfig& cfg) {
  const double p = std::clamp(progress, 0.0, 1.0);
  const double w = cfg.warmup_fraction;
  if (p <= w) return cfg.base_lr * p / w;
  const double lr = cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (p - w) / (1.0 - w)));
  return std::max(0.0, lr);
}

torch::Tensor sample_timesteps(int64_t batch, int64_t steps, at::Generator& gen) {
  return torch::randint(0, steps, {batch}, gen, torch::kInt64);
}

Trainer::Trainer(ModelConfig model_cfg, TrainConfig train_cfg, DiffusionConfig diffusion_cfg,
                 nlohmann::json run_config)
    : model_cfg_(std::move(model_cfg)),
      train_cfg_(std::move(train_cfg)),
      diffusion_cfg_(diffusion_cfg),
      sched_(diffusion_cfg.make()),
      run_config_(std::move(run_config)),
      gen_(make_generator(derive_seed(train_cfg_.seed, {0x7a1ULL}))) {
  train_cfg_.validate();
  model_cfg_.diffusion_steps = diffusion_cfg_.steps;
  model_cfg_.validate();
  torch::manual_seed(derive_seed(train_cfg_.seed, {0x1417ULL}));  // parameter init
  model_ = DiffUNet(model_cfg_);
  optimizer_ = std::make_unique<torch::optim::AdamW>(
      model_->parameters(),
      torch::optim::AdamWOptions(train_cfg_.base_lr).betas({0.9, 0.999}).eps(1e-8).weight_decay(train_cfg_.weight_decay));
}

nlohmann::json Trainer::config_echo() const {
  auto echo = run_config_.is_object() ? run_config_ : nlohmann::json::object();
  echo["model"] = to_json(model_cfg_);
  echo["train"] = to_json(train_cfg_);
  echo["diffusion"] = to_json(diffusion_cfg_);
  return echo;
}

Trainer Trainer::from_checkpoint(const std::filesystem::path& path) {
  auto loaded = load_checkpoint(path);
  const auto& cfg = loaded.config;
  if (!cfg.contains("train") || !cfg.contains("diffusion")) {
    throw FormatError("checkpoint " + path.string() + " lacks a training config echo");
  }
  const auto& train = cfg["train"];
  Trainer trainer(model_config_from_json(cfg["model"]),
                  train_config_from_json(train, train.at("validation"), train.at("validation").at("fusion")),
                  diffusion_config_from_json(cfg["diffusion"]), cfg);
  {
    torch::NoGradGuard no_grad;
    auto src = loaded.model->named_parameters();
    for (auto& p : trainer.model_->named_parameters()) p.value().copy_(src[p.key()]);
  }
  load_optimizer_state(path, *trainer.optimizer_);
  trainer.state_ = loaded.state;
  if (loaded.state.generator_state.defined()) {
    std::lock_guard<std::mutex> lock(trainer.gen_.mutex());
    trainer.gen_.set_state(loaded.state.generator_state);
  }
  return trainer;
}

void Trainer::save(const std::filesystem::path& path) const {
  auto state = state_;
  {
    std::lock_guard<std::mutex> lock(gen_.mutex());
    state.generator_state = gen_.get_state();
  }
  auto model = model_;
  save_checkpoint(path, model, config_echo(), optimizer_.get(), state);
}

void Trainer::set_learning_rate(double lr) {
  for (auto& group : optimizer_->param_groups()) group.options().set_lr(lr);
}

int64_t Trainer::steps_per_epoch(size_t train_cases) const {
  const auto crops = static_cast<int64_t>(train_cases) * train_cfg_.patches_per_case;
  return (crops + train_cfg_.batch_size - 1) / train_cfg_.batch_size;
}

std::vector<std::vector<TrainingPatch>> Trainer::epoch_batches(const std::vector<VolumeRecord>& train,
                                                               int64_t epoch) const {
  std::vector<TrainingPatch> crops;
  for (size_t c = 0; c < train.size(); ++c) {
    const auto case_seed = derive_seed(train_cfg_.seed, {static_cast<uint64_t>(epoch), static_cast<uint64_t>(c)});
    auto patches = sample_patches(train[c], train_cfg_.patch_size, train_cfg_.patches_per_case, case_seed,
                                  train_cfg_.fg_bias);
    for (size_t i = 0; i < patches.size(); ++i) {
      crops.push_back(train_cfg_.augment ? augment(patches[i], derive_seed(case_seed, {0xa06ULL, i})) : patches[i]);
    }
  }
  std::mt19937_64 rng(derive_seed(train_cfg_.seed, {static_cast<uint64_t>(epoch), 0x5f1ULL}));
  std::shuffle(crops.begin(), crops.end(), rng);
  std::vector<std::vector<TrainingPatch>> batches;
  for (size_t i = 0; i < crops.size(); i += static_cast<size_t>(train_cfg_.batch_size)) {
    const auto end = std::min(crops.size(), i + static_cast<size_t>(train_cfg_.batch_size));
    batches.emplace_back(crops.begin() + static_cast<std::ptrdiff_t>(i), crops.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

StepReport Trainer::train_step(const std::vector<TrainingPatch>& batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<torch::Tensor> images, targets;
  for (const auto& patch : batch) {
    images.push_back(patch.image);
    targets.push_back(encode_one_hot(LabelVolume{patch.labels}, model_cfg_.num_classes).data);
  }
  auto image = torch::stack(images);
  auto x0 = torch::stack(targets);
  const auto n = static_cast<int64_t>(batch.size());
  auto t = sample_timesteps(n, sched_.steps(), gen_);
  auto eps = torch::randn(x0.sizes(), gen_, torch::kFloat32);
  auto x_t = q_sample(x0, t, eps, sched_);

  model_->train();
  auto pred = model_->forward(image, x_t, t);
  auto terms = total_loss(pred, x0);
  StepReport report;
  report.loss = terms.report();
  report.lr = optimizer_->param_groups().front().options().get_lr();
  if (!std::isfinite(report.loss.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state_.global_step << ": dice=" << report.loss.dice
       << " bce=" << report.loss.bce << " mse=" << report.loss.mse << " t=" << c10::str(t);
    throw NumericError(os.str());
  }
  optimizer_->zero_grad();
  terms.total.backward();
  if (train_cfg_.grad_clip > 0.0) {
    report.grad_norm = torch::nn::utils::clip_grad_norm_(model_->parameters(), train_cfg_.grad_clip);
    report.clipped = report.grad_norm > train_cfg_.grad_clip;
  }
  optimizer_->step();
  ++state_.global_step;
  return report;
}

SplitEvaluation Trainer::validate(const std::vector<VolumeRecord>& val) {
  torch::NoGradGuard no_grad;
  auto result = evaluate_records(model_, sched_, val, train_cfg_.validation, derive_seed(train_cfg_.seed, {0x7a11dULL}));
  model_->train();
  return result;
}

FitResult Trainer::fit(const std::vector<VolumeRecord>& train, const std::vector<VolumeRecord>& val,
                       const std::filesystem::path& out_dir, std::optional<int64_t> stop_after) {
  if (train.empty()) throw ConfigError("fit: training split is empty");
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::app);
  if (!log) throw IoError("cannot open " + (out_dir / "train_log.jsonl").string());

  FitResult result;
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";
  const int64_t per_epoch = steps_per_epoch(train.size());
  const double total_steps = static_cast<double>(per_epoch * train_cfg_.epochs);

  const int64_t last_epoch = std::min(train_cfg_.epochs, stop_after.value_or(train_cfg_.epochs));
  for (int64_t epoch = state_.epoch; epoch < last_epoch; ++epoch) {
    const auto batches = epoch_batches(train, epoch);
    double lr = 0.0;
    for (const auto& batch : batches) {
      lr = lr_at(static_cast<double>(state_.global_step) / total_steps, train_cfg_);
      set_learning_rate(lr);
      const int64_t step_index = state_.global_step;
      auto step = train_step(batch);
      if (step.clipped) log_info("step " + std::to_string(step_index) + ": grad norm " + std::to_string(step.grad_norm) + " clipped");
      log << nlohmann::json{{"type", "step"},       {"step", step_index},         {"epoch", epoch},
                            {"lr", step.lr},        {"dice", step.loss.dice},     {"bce", step.loss.bce},
                            {"mse", step.loss.mse}, {"total", step.loss.total},   {"grad_norm", step.grad_norm},
                            {"clipped", step.clipped}}
                 .dump()
          << '\n';
      result.steps.push_back(step);
    }
    state_.epoch = epoch + 1;
    log << nlohmann::json{{"type", "epoch"}, {"epoch", epoch}, {"lr", lr}}.dump() << '\n';

    const bool validate_now = !val.empty() && ((epoch + 1) % train_cfg_.val_interval == 0 || epoch + 1 == train_cfg_.epochs);
    bool improved = false;
    if (validate_now) {
      auto eval = validate(val);
      nlohmann::json cases = nlohmann::json::array();
      for (const auto& r : eval.reports) cases.push_back(to_json(r));
      log << nlohmann::json{{"type", "val"}, {"epoch", epoch}, {"dice", eval.mean_dice}, {"cases", cases}}.dump() << '\n';
      log_info("epoch " + std::to_string(epoch + 1) + ": val dice " + std::to_string(eval.mean_dice));
      if (eval.mean_dice > state_.best_val_dice) {
        state_.best_val_dice = eval.mean_dice;
        state_.info["best_epoch"] = epoch + 1;
        improved = true;
      }
    }
    log.flush();
    save(result.last_checkpoint);
    if (improved || val.empty()) save(result.best_checkpoint);
  }
  result.best_val_dice = state_.best_val_dice;
  return result;
}

}  // namespace diffunet
