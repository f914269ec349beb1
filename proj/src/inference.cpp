#include "diffunet/inference.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <algorithm>

namespace diffunet {

nlohmann::json to_json(const InferenceOptions& opts) {
  return {{"patch_size", opts.patch_size},
          {"overlap", opts.overlap},
          {"blend", opts.blend == BlendMode::kGaussian ? "gaussian" : "constant"},
          {"ddim_steps", opts.ddim_steps},
          {"eta", opts.eta},
          {"fusion",
           {{"samples", opts.fusion.samples},
            {"scale", opts.fusion.scale ? nlohmann::json(*opts.fusion.scale) : nlohmann::json(nullptr)},
            {"mode", opts.fusion.mode == FusionMode::kSimple ? "simple" : "suf"},
            {"normalize", opts.fusion.normalize}}}};
}

InferenceOptions inference_options_from_json(const nlohmann::json& inference, const nlohmann::json& fusion) {
  InferenceOptions opts;
  try {
    opts.patch_size = inference.at("patch_size").get<Shape3>();
    opts.overlap = inference.at("overlap").get<double>();
    opts.blend = parse_blend(inference.at("blend").get<std::string>());
    opts.ddim_steps = inference.at("ddim_steps").get<int64_t>();
    opts.eta = inference.at("eta").get<double>();
    opts.fusion.samples = fusion.at("samples").get<int64_t>();
    if (!fusion.at("scale").is_null()) opts.fusion.scale = fusion.at("scale").get<double>();
    const auto mode = fusion.at("mode").get<std::string>();
    if (mode == "suf") {
      opts.fusion.mode = FusionMode::kStepUncertainty;
    } else if (mode == "simple") {
      opts.fusion.mode = FusionMode::kSimple;
    } else {
      throw ConfigError("fusion.mode must be suf|simple, got '" + mode + "'");
    }
    opts.fusion.normalize = fusion.at("normalize").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad inference/fusion config: ") + e.what());
  }
  opts.fusion.validate();
  if (opts.ddim_steps < 1) throw ConfigError("inference.ddim_steps must be >= 1");
  return opts;
}

Denoiser bind_model(DiffUNet& model, const torch::Tensor& image_patch, bool zero_features) {
  if (image_patch.dim() != 4) throw ShapeError("bind_model expects a (M, D, W, H) image patch");
  torch::NoGradGuard no_grad;
  auto image = image_patch.unsqueeze(0);
  MultiScaleFeatures fe;
  if (!zero_features) fe = model->encode_image(image);
  return [model, image, fe](const torch::Tensor& x_t, int64_t t) mutable {
    torch::NoGradGuard guard;
    const int64_t batch = x_t.size(0);
    auto img = image.expand({batch, -1, -1, -1, -1});
    auto steps = torch::full({batch}, t, torch::kInt64);
    return model->denoise(img, x_t, steps, fe);
  };
}

namespace {

TilingPlan plan_for(const ImageVolume& image, const InferenceOptions& opts) {
  return plan_tiles(image.shape(), opts.patch_size, opts.overlap, opts.blend);
}

std::vector<int64_t> label_patch_shape(const DiffUNet& model, const Shape3& patch) {
  return {model->config().num_classes, patch[0], patch[1], patch[2]};
}

}  // namespace

CasePrediction predict_case(DiffUNet& model, const NoiseSchedule& sched, const ImageVolume& image,
                            const Spacing& spacing, const InferenceOptions& opts, uint64_t seed) {
  model->eval();
  const auto plan = plan_for(image, opts);
  const auto ddim = DdimPlan::evenly_spaced(sched.steps(), opts.ddim_steps, opts.eta);
  const auto shape = label_patch_shape(model, opts.patch_size);
  const int64_t n = model->config().num_classes;
  const int64_t k = ddim.size();

  auto stitched = sliding_window_inference(image.data, plan, [&](const torch::Tensor& patch, size_t index) {
    auto result = run_suf_inference(bind_model(model, patch), shape, ddim, sched, opts.fusion,
                                    derive_seed(seed, {static_cast<uint64_t>(index)}));
    if (!opts.diagnostics) return result.fused;
    std::vector<torch::Tensor> channels{result.fused};
    for (const auto& step : result.steps) channels.push_back(step.uncertainty);
    for (const auto& step : result.steps) channels.push_back(step.weight);
    return torch::cat(channels, 0);
  });

  CasePrediction out;
  out.probabilities = stitched.slice(0, 0, n).contiguous();
  if (opts.diagnostics) {
    const auto sizes = out.probabilities.sizes();
    out.step_uncertainty = stitched.slice(0, n, n + k * n).reshape({k, n, sizes[1], sizes[2], sizes[3]});
    out.step_weight = stitched.slice(0, n + k * n, n + 2 * k * n).reshape({k, n, sizes[1], sizes[2], sizes[3]});
  }
  out.labels = decode_argmax(out.probabilities, spacing);
  return out;
}

std::vector<torch::Tensor> predict_case_arms(DiffUNet& model, const NoiseSchedule& sched, const ImageVolume& image,
                                             const InferenceOptions& opts, const std::vector<ArmSpec>& arms,
                                             uint64_t seed, bool zero_features) {
  if (arms.empty()) throw ConfigError("predict_case_arms: no arms requested");
  model->eval();
  const auto plan = plan_for(image, opts);
  const auto ddim = DdimPlan::evenly_spaced(sched.steps(), opts.ddim_steps, opts.eta);
  const auto shape = label_patch_shape(model, opts.patch_size);
  const int64_t n = model->config().num_classes;
  int64_t max_samples = 1;
  for (const auto& arm : arms) {
    if (arm.samples < 1) throw ConfigError("arm '" + arm.name + "' needs >= 1 samples");
    max_samples = std::max(max_samples, arm.samples);
  }
  auto shared = opts.fusion;
  shared.samples = max_samples;

  auto stitched = sliding_window_inference(image.data, plan, [&](const torch::Tensor& patch, size_t index) {
    auto result = run_suf_inference(bind_model(model, patch, zero_features), shape, ddim, sched, shared,
                                    derive_seed(seed, {static_cast<uint64_t>(index)}));
    std::vector<torch::Tensor> outputs;
    for (const auto& arm : arms) {
      if (arm.kind == ArmKind::kLastStep) {
        outputs.push_back(result.steps.back().samples.front());
        continue;
      }
      std::vector<std::vector<torch::Tensor>> prefix;
      for (const auto& step : result.steps) {
        prefix.emplace_back(step.samples.begin(), step.samples.begin() + arm.samples);
      }
      auto cfg = opts.fusion;
      cfg.samples = arm.samples;
      cfg.mode = arm.kind == ArmKind::kSimple ? FusionMode::kSimple : FusionMode::kStepUncertainty;
      outputs.push_back(fuse(summarize_steps(prefix, cfg), cfg.normalize));
    }
    return torch::cat(outputs, 0);
  });
  std::vector<torch::Tensor> out;
  for (size_t a = 0; a < arms.size(); ++a) {
    out.push_back(stitched.slice(0, static_cast<int64_t>(a) * n, static_cast<int64_t>(a + 1) * n).contiguous());
  }
  return out;
}

SplitEvaluation evaluate_records(DiffUNet& model, const NoiseSchedule& sched, const std::vector<VolumeRecord>& records,
                                 const InferenceOptions& opts, uint64_t seed) {
  SplitEvaluation eval;
  if (records.empty()) return eval;
  const auto spec = RegionSpec::per_class(model->config().num_classes);
  double total = 0.0;
  for (size_t i = 0; i < records.size(); ++i) {
    auto prediction = predict_case(model, sched, records[i].image, records[i].spacing(), opts,
                                   derive_seed(seed, {static_cast<uint64_t>(i)}));
    auto report = region_report(prediction.labels, records[i].labels, spec);
    total += report.mean_dice;
    eval.reports.push_back(std::move(report));
  }
  eval.mean_dice = total / static_cast<double>(records.size());
  return eval;
}

}  // namespace diffunet
