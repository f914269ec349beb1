#include "diffunet/model.hpp"

#include "diffunet/error.hpp"

#include <cmath>
#include <string>

namespace diffunet {

namespace nn = torch::nn;

void ModelConfig::validate() const {
  if (in_modalities < 1) throw ConfigError("model.in_modalities must be >= 1");
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (base_features < 1) throw ConfigError("model.base_features must be >= 1");
  if (scales.empty() || scales.front() != 1) throw ConfigError("model.scales must start at 1");
  for (size_t i = 1; i < scales.size(); ++i) {
    if (scales[i] <= scales[i - 1] || scales[i] % scales[i - 1] != 0) {
      throw ConfigError("model.scales must be strictly increasing, each dividing the next");
    }
  }
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw ConfigError("model.time_embed_dim must be even, got " + std::to_string(time_embed_dim));
  }
  if (diffusion_steps < 1) throw ConfigError("model.diffusion_steps must be >= 1");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"in_modalities", cfg.in_modalities},   {"num_classes", cfg.num_classes},
          {"base_features", cfg.base_features},   {"scales", cfg.scales},
          {"time_embed_dim", cfg.time_embed_dim}, {"diffusion_steps", cfg.diffusion_steps},
          {"use_feature_encoder", cfg.use_feature_encoder}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.in_modalities = j.at("in_modalities").get<int64_t>();
  cfg.num_classes = j.at("num_classes").get<int64_t>();
  cfg.base_features = j.at("base_features").get<int64_t>();
  cfg.scales = j.at("scales").get<std::vector<int64_t>>();
  cfg.time_embed_dim = j.at("time_embed_dim").get<int64_t>();
  cfg.diffusion_steps = j.at("diffusion_steps").get<int64_t>();
  cfg.use_feature_encoder = j.at("use_feature_encoder").get<bool>();
  cfg.validate();
  return cfg;
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int64_t dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dim must be even, got " + std::to_string(dim));
  const int64_t half = dim / 2;
  auto k = torch::arange(half, torch::kFloat64);
  auto freqs = torch::exp(-std::log(10000.0) * k / static_cast<double>(half));
  auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1).to(torch::kFloat32);
}

int64_t group_count(int64_t channels) {
  for (int64_t g = std::min<int64_t>(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

ResBlockImpl::ResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t time_dim) {
  norm1_ = register_module("norm1", nn::GroupNorm(group_count(in_channels), in_channels));
  conv1_ = register_module("conv1", nn::Conv3d(nn::Conv3dOptions(in_channels, out_channels, 3).padding(1)));
  norm2_ = register_module("norm2", nn::GroupNorm(group_count(out_channels), out_channels));
  conv2_ = register_module("conv2", nn::Conv3d(nn::Conv3dOptions(out_channels, out_channels, 3).padding(1)));
  if (time_dim > 0) time_proj_ = register_module("time_proj", nn::Linear(time_dim, out_channels));
  if (in_channels != out_channels) {
    skip_ = register_module("skip", nn::Conv3d(nn::Conv3dOptions(in_channels, out_channels, 1)));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1_(torch::silu(norm1_(x)));
  if (!time_proj_.is_empty() && temb.defined()) {
    h = h + time_proj_(torch::silu(temb)).view({h.size(0), h.size(1), 1, 1, 1});
  }
  h = conv2_(torch::silu(norm2_(h)));
  return h + (skip_.is_empty() ? x : skip_(x));
}

TimeEmbeddingImpl::TimeEmbeddingImpl(int64_t dim) : dim_(dim) {
  fc1_ = register_module("fc1", nn::Linear(dim, dim));
  fc2_ = register_module("fc2", nn::Linear(dim, dim));
}

torch::Tensor TimeEmbeddingImpl::forward(const torch::Tensor& t) {
  return fc2_(torch::silu(fc1_(sinusoidal_embedding(t, dim_))));
}

EncoderImpl::EncoderImpl(int64_t in_channels, const ModelConfig& cfg, bool timed) {
  const int64_t time_dim = timed ? cfg.time_embed_dim : 0;
  stem_ = register_module("stem", nn::Conv3d(nn::Conv3dOptions(in_channels, cfg.width(0), 3).padding(1)));
  for (size_t level = 0; level < cfg.scales.size(); ++level) {
    if (level > 0) {
      const int64_t ratio = cfg.scales[level] / cfg.scales[level - 1];
      downs_.push_back(register_module(
          "down" + std::to_string(level),
          nn::Conv3d(nn::Conv3dOptions(cfg.width(level - 1), cfg.width(level), ratio).stride(ratio))));
    }
    blocks_.push_back(register_module("block" + std::to_string(level),
                                      ResBlock(cfg.width(level), cfg.width(level), time_dim)));
  }
}

MultiScaleFeatures EncoderImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  MultiScaleFeatures features;
  auto h = stem_(x);
  for (size_t level = 0; level < blocks_.size(); ++level) {
    if (level > 0) h = downs_[level - 1](h);
    h = blocks_[level](h, temb);
    features.push_back(h);
  }
  return features;
}

DiffUNetImpl::DiffUNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto levels = cfg_.scales.size();
  const int64_t time_dim = cfg_.time_embed_dim;
  time_embed_ = register_module("time_embed", TimeEmbedding(time_dim));
  du_encoder_ = register_module("du_encoder", Encoder(cfg_.in_modalities + cfg_.num_classes, cfg_, true));
  if (cfg_.use_feature_encoder) {
    feature_encoder_ = register_module("feature_encoder", Encoder(cfg_.in_modalities, cfg_, false));
  }
  mid_ = register_module("mid", ResBlock(cfg_.width(levels - 1), cfg_.width(levels - 1), time_dim));
  ups_.resize(levels - 1, nullptr);
  decoder_.resize(levels - 1, nullptr);
  for (size_t level = levels - 1; level-- > 0;) {
    const int64_t ratio = cfg_.scales[level + 1] / cfg_.scales[level];
    ups_[level] = register_module(
        "up" + std::to_string(level),
        nn::ConvTranspose3d(nn::ConvTranspose3dOptions(cfg_.width(level + 1), cfg_.width(level), ratio).stride(ratio)));
    decoder_[level] = register_module("decoder" + std::to_string(level),
                                      ResBlock(2 * cfg_.width(level), cfg_.width(level), time_dim));
  }
  out_norm_ = register_module("out_norm", nn::GroupNorm(group_count(cfg_.width(0)), cfg_.width(0)));
  head_ = register_module("head", nn::Conv3d(nn::Conv3dOptions(cfg_.width(0), cfg_.num_classes, 1)));
  // Zero head: every channel starts at 0.5. With a random head, nested classes
  // that share a channel direction at init can stay merged for hundreds of steps.
  torch::NoGradGuard no_grad;
  head_->weight.zero_();
  head_->bias.zero_();
}

void DiffUNetImpl::check_spatial(const torch::Tensor& volume) const {
  if (volume.dim() != 5) throw ShapeError("expected a (B, C, D, W, H) tensor, got " + std::to_string(volume.dim()) + " dims");
  const int64_t coarsest = cfg_.scales.back();
  for (int64_t axis = 2; axis < 5; ++axis) {
    if (volume.size(axis) % coarsest != 0) {
      throw ShapeError("spatial size " + std::to_string(volume.size(axis)) + " not divisible by coarsest scale " +
                       std::to_string(coarsest));
    }
  }
}

void DiffUNetImpl::check_inputs(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t) const {
  check_spatial(image);
  check_spatial(x_t);
  if (image.size(1) != cfg_.in_modalities) {
    throw ShapeError("image has " + std::to_string(image.size(1)) + " modalities, model expects " +
                     std::to_string(cfg_.in_modalities));
  }
  if (x_t.size(1) != cfg_.num_classes) {
    throw ShapeError("x_t has " + std::to_string(x_t.size(1)) + " channels, model expects " +
                     std::to_string(cfg_.num_classes));
  }
  if (image.size(0) != x_t.size(0) || image.size(2) != x_t.size(2) || image.size(3) != x_t.size(3) ||
      image.size(4) != x_t.size(4)) {
    throw ShapeError("image and x_t disagree in batch or spatial shape");
  }
  if (t.dim() != 1 || t.size(0) != x_t.size(0)) throw ShapeError("need one timestep per batch element");
  if (t.min().item<int64_t>() < 0 || t.max().item<int64_t>() >= cfg_.diffusion_steps) {
    throw OutOfRangeError("timestep outside [0, " + std::to_string(cfg_.diffusion_steps) + ")");
  }
}

MultiScaleFeatures DiffUNetImpl::encode_image(const torch::Tensor& image) {
  if (feature_encoder_.is_empty()) return {};
  check_spatial(image);
  if (image.size(1) != cfg_.in_modalities) throw ShapeError("image modality count mismatch");
  return feature_encoder_(image, torch::Tensor());
}

torch::Tensor DiffUNetImpl::denoise(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t,
                                    const MultiScaleFeatures& fe) {
  check_inputs(image, x_t, t);
  auto temb = time_embed_(t);
  auto features = du_encoder_(torch::cat({image, x_t}, 1), temb);
  if (!fe.empty()) {
    if (fe.size() != features.size()) throw ShapeError("feature encoder scale count mismatch");
    for (size_t i = 0; i < features.size(); ++i) {
      if (fe[i].size(1) != features[i].size(1) || fe[i].size(2) != features[i].size(2) ||
          fe[i].size(3) != features[i].size(3) || fe[i].size(4) != features[i].size(4)) {
        throw ShapeError("feature encoder shape mismatch at scale " + std::to_string(cfg_.scales[i]));
      }
      features[i] = features[i] + fe[i];
    }
  }
  auto h = mid_(features.back(), temb);
  for (size_t level = features.size() - 1; level-- > 0;) {
    h = ups_[level](h);
    h = decoder_[level](torch::cat({h, features[level]}, 1), temb);
  }
  return torch::sigmoid(head_(torch::silu(out_norm_(h))));
}

torch::Tensor DiffUNetImpl::forward(const torch::Tensor& image, const torch::Tensor& x_t, const torch::Tensor& t) {
  check_inputs(image, x_t, t);
  return denoise(image, x_t, t, encode_image(image));
}

}  // namespace diffunet
