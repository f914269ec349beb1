#pragma once

#include <torch/torch.h>

#include "json.hpp"

#include <cstdint>
#include <vector>

namespace diffunet {

/// Architecture hyperparameters. The channel width at scale i is i * base_features
/// and the spatial size is the patch size divided by i.
struct ModelConfig {
  int64_t in_modalities = 1;
  int64_t num_classes = 2;
  int64_t base_features = 8;
  std::vector<int64_t> scales{1, 2, 4, 8, 16};
  int64_t time_embed_dim = 32;
  int64_t diffusion_steps = 1000;  // valid timesteps are [0, diffusion_steps)
  bool use_feature_encoder = true;

  void validate() const;
  int64_t width(size_t level) const { return scales.at(level) * base_features; }
  int64_t levels() const { return static_cast<int64_t>(scales.size()); }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// One tensor per scale, shaped (B, i*f, D/i, W/i, H/i).
using MultiScaleFeatures = std::vector<torch::Tensor>;

/// Raw sinusoidal encoding: [sin(t w_k), cos(t w_k)], w_k = 10000^(-k/(dim/2)).
/// `t` is an int64 tensor (B); returns (B, dim) float.
torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int64_t dim);

int64_t group_count(int64_t channels);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv3d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Linear time_proj_{nullptr};
  torch::nn::Conv3d skip_{nullptr};
};
TORCH_MODULE(ResBlock);

class TimeEmbeddingImpl : public torch::nn::Module {
 public:
  explicit TimeEmbeddingImpl(int64_t dim);
  torch::Tensor forward(const torch::Tensor& t);

 private:
  int64_t dim_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TimeEmbedding);

/// Multi-scale encoder: stem + residual block at scale 1, then a strided
/// downsampling conv + residual block per further scale. `timed` encoders
/// take a time embedding (Denoising-UNet); untimed ones do not (Feature Encoder).
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(int64_t in_channels, const ModelConfig& cfg, bool timed);
  MultiScaleFeatures forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::Conv3d stem_{nullptr};
  std::vector<torch::nn::Conv3d> downs_;
  std::vector<ResBlock> blocks_;
};
TORCH_MODULE(Encoder);

/// Denoising module: a time-conditioned U-Net over cat(image, x_t) whose
/// encoder features are summed per scale with an independent image-only
/// feature encoder before the decoder. Outputs per-channel sigmoid
/// probabilities, i.e. the predicted clean label embedding.
class DiffUNetImpl : public torch::nn::Module {
 public:
  explicit DiffUNetImpl(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Feature-encoder pass (time-free). Returns an empty set when the model
  /// was built without a feature encoder.
  MultiScaleFeatures encode_image(const torch::Tensor& image);

  /// DU pass with precomputed encoder features; an empty `fe` means DU-only.
  torch::Tensor denoise(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t,
                        const MultiScaleFeatures& fe);

  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t);

  /// Shape-checks without running any compute.
  void check_inputs(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t) const;
  void check_spatial(const torch::Tensor& volume) const;

 private:
  ModelConfig cfg_;
  TimeEmbedding time_embed_{nullptr};
  Encoder du_encoder_{nullptr};
  Encoder feature_encoder_{nullptr};
  ResBlock mid_{nullptr};
  std::vector<torch::nn::ConvTranspose3d> ups_;
  std::vector<ResBlock> decoder_;
  torch::nn::GroupNorm out_norm_{nullptr};
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(DiffUNet);

}  // namespace diffunet
