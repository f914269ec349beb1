#include "diffunet/commands.hpp"

#include "diffunet/checkpoint.hpp"
#include "diffunet/error.hpp"
#include "diffunet/label_codec.hpp"
#include "diffunet/log.hpp"
#include "diffunet/phantom.hpp"
#include "diffunet/rng.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace diffunet {

namespace fs = std::filesystem;

namespace {

bool non_empty_dir(const fs::path& dir) { return fs::exists(dir) && !fs::is_empty(dir); }

std::vector<VolumeRecord> load_records(const RunConfig& cfg, const std::string& split) {
  const fs::path dir = cfg.section("data").at("dir").get<std::string>();
  const auto manifest = read_manifest(dir);
  if (!manifest.splits.count(split)) throw ConfigError("manifest in " + dir.string() + " has no split '" + split + "'");
  return load_split(dir, manifest, split, cfg.section("data").at("normalize").get<bool>());
}

NoiseSchedule schedule_for(const LoadedCheckpoint& ckpt, const RunConfig& cfg) {
  auto diffusion = ckpt.config.contains("diffusion") ? diffusion_config_from_json(ckpt.config["diffusion"]) : cfg.diffusion();
  return diffusion.make();
}

LoadedCheckpoint load_for_arm(const std::string& arm, const std::string& path) {
  if (path.empty()) throw ConfigError("ablation arm '" + arm + "': no checkpoint configured");
  if (!fs::exists(path)) throw IoError("ablation arm '" + arm + "': checkpoint " + path + " not found");
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    rethrow_with_context(e, "ablation arm '" + arm + "': ");
  }
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

Manifest cmd_gen_data(const RunConfig& cfg, bool force) {
  const auto& data = cfg.section("data");
  const fs::path dir = data.at("dir").get<std::string>();
  if (non_empty_dir(dir)) {
    if (!force) throw IoError("target directory " + dir.string() + " is not empty (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  const auto n = data.at("num_cases").get<int64_t>();
  if (n < 1) throw ConfigError("data.num_cases must be >= 1");

  auto spec = cfg.phantom();
  std::vector<CaseEntry> entries;
  for (int64_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03lld", static_cast<long long>(i));
    spec.seed = derive_seed(cfg.seed(), {0xda7aULL, static_cast<uint64_t>(i)});
    write_record(generate_phantom(spec, id), dir);
    entries.push_back({id, std::string(id) + "_image.json", std::string(id) + "_label.json"});
  }
  auto manifest = make_manifest(std::move(entries), data.at("ratios").get<std::array<double, 3>>(), cfg.seed());
  write_manifest(manifest, dir);
  write_resolved_config(cfg, dir);
  log_info("wrote " + std::to_string(n) + " phantoms to " + dir.string());
  return manifest;
}

FitResult cmd_train(const RunConfig& cfg) {
  const auto train = load_records(cfg, "train");
  const auto val = load_records(cfg, "val");
  const fs::path out = cfg.section("train").at("out_dir").get<std::string>();
  const auto resume = cfg.section("train").at("resume").get<std::string>();
  write_resolved_config(cfg, out);
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw IoError("resume checkpoint " + resume + " not found");
    auto trainer = Trainer::from_checkpoint(resume);
    log_info("resuming at epoch " + std::to_string(trainer.state().epoch));
    return trainer.fit(train, val, out);
  }
  Trainer trainer(cfg.model(), cfg.train(), cfg.diffusion(), cfg.tree);
  return trainer.fit(train, val, out);
}

std::vector<fs::path> cmd_infer(const RunConfig& cfg, bool export_slices) {
  const auto& section = cfg.section("inference");
  const auto ckpt_path = section.at("checkpoint").get<std::string>();
  if (!fs::exists(ckpt_path)) throw IoError("checkpoint " + ckpt_path + " not found");
  auto ckpt = load_checkpoint(ckpt_path);
  const auto sched = schedule_for(ckpt, cfg);
  const auto opts = cfg.inference();
  const auto records = load_records(cfg, section.at("split").get<std::string>());
  const fs::path out = section.at("out_dir").get<std::string>();
  fs::create_directories(out);
  write_resolved_config(cfg, out);

  std::vector<fs::path> stems;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto pred = predict_case(ckpt.model, sched, rec.image, rec.spacing(), opts,
                             derive_seed(cfg.seed(), {static_cast<uint64_t>(i)}));
    write_raw_volume(out / (rec.case_id + "_prob"), pred.probabilities, VolumeDType::kFloat32, rec.spacing(), rec.case_id);
    write_raw_volume(out / (rec.case_id + "_pred"), pred.labels.data.to(torch::kUInt8), VolumeDType::kUInt8,
                     rec.spacing(), rec.case_id);
    if (opts.diagnostics) {
      auto flat = [](const torch::Tensor& t) { return t.reshape({-1, t.size(2), t.size(3), t.size(4)}); };
      write_raw_volume(out / (rec.case_id + "_uncertainty"), flat(pred.step_uncertainty), VolumeDType::kFloat32,
                       rec.spacing(), rec.case_id);
      write_raw_volume(out / (rec.case_id + "_weight"), flat(pred.step_weight), VolumeDType::kFloat32, rec.spacing(),
                       rec.case_id);
    }
    if (export_slices) {
      write_overlay_ppm(out / "slices" / (rec.case_id + "_overlay.ppm"), rec.image.data, rec.labels.data,
                        pred.labels.data);
    }
    log_info("inferred " + rec.case_id);
    stems.push_back(out / (rec.case_id + "_pred"));
  }
  return stems;
}

std::vector<MetricsRow> cmd_eval(const RunConfig& cfg) {
  const auto& section = cfg.section("eval");
  const fs::path pred_dir = section.at("pred_dir").get<std::string>();
  const fs::path out = section.at("out").get<std::string>();
  const auto records = load_records(cfg, section.at("split").get<std::string>());
  const auto spec = RegionSpec::from_name(section.at("regions").get<std::string>(),
                                          cfg.section("data").at("num_classes").get<int64_t>());
  std::vector<MetricsRow> rows;
  std::vector<RegionReport> reports;
  for (const auto& rec : records) {
    auto raw = read_raw_volume(pred_dir / (rec.case_id + "_pred.json"));
    if (raw.data.size(0) != 1) throw ShapeError("prediction for " + rec.case_id + " must have one channel");
    LabelVolume pred{raw.data[0].to(torch::kInt64), rec.spacing()};
    if (pred.shape() != rec.labels.shape()) throw ShapeError("prediction for " + rec.case_id + " does not match its label grid");
    auto report = region_report(pred, rec.labels, spec);
    reports.push_back(report);
    rows.push_back({rec.case_id, std::move(report)});
  }
  if (!reports.empty()) rows.push_back({"Average", average_reports(reports)});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_metrics_table(out, rows);
  write_resolved_config(cfg, out.has_parent_path() ? out.parent_path() : fs::path("."));
  return rows;
}

nlohmann::json AblationReport::to_json() const {
  auto rows = [](const std::vector<AblationRow>& rs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rs) {
      arr.push_back({{"name", r.name},
                     {"mean_dice", r.mean_dice},
                     {"mean_hd95", r.mean_hd95 ? nlohmann::json(*r.mean_hd95) : nlohmann::json(nullptr)},
                     {"reference", r.reference ? nlohmann::json(*r.reference) : nlohmann::json(nullptr)}});
    }
    return arr;
  };
  return {{"modules", rows(modules)}, {"samples", rows(samples)}};
}

std::string AblationReport::to_markdown() const {
  std::ostringstream os;
  auto table = [&](const std::string& head, const std::vector<AblationRow>& rs) {
    os << "| " << head << " | Dice | HD95 | published Dice |\n|---|---|---|---|\n";
    for (const auto& r : rs) {
      os << "| " << r.name << " | " << fmt(r.mean_dice) << " | " << (r.mean_hd95 ? fmt(*r.mean_hd95, 2) : "NA") << " | "
         << (r.reference ? fmt(*r.reference, 2) : "-") << " |\n";
    }
  };
  os << "## Module ablation\n\n";
  table("arm", modules);
  os << "\n## Number of samples S\n\n";
  table("S", samples);
  os << "\nPublished Dice values are averages over BraTS2020 regions (percent), shown for context only;\n"
        "toy phantom scores are not comparable and no ordering is asserted.\n";
  return os.str();
}

AblationReport cmd_ablate(const RunConfig& cfg) {
  const auto& section = cfg.section("ablate");
  auto basic = load_for_arm("basic", section.at("checkpoint_basic").get<std::string>());
  auto fe = load_for_arm("basic+FE", section.at("checkpoint_fe").get<std::string>());
  if (!fe.model->config().use_feature_encoder) {
    throw ConfigError("ablation arm 'basic+FE': checkpoint has no feature encoder");
  }
  const auto sweep = section.at("samples").get<std::vector<int64_t>>();
  const auto opts = cfg.inference();
  const auto records = load_records(cfg, section.at("split").get<std::string>());
  if (records.empty()) throw ConfigError("ablation split is empty");
  const fs::path out = section.at("out_dir").get<std::string>();

  const int64_t s = opts.fusion.samples;
  std::vector<ArmSpec> fe_arms{{"basic+FE", ArmKind::kLastStep, 1},
                               {"basic+FE+SF", ArmKind::kSimple, s},
                               {"basic+FE+SUF", ArmKind::kSuf, s}};
  for (auto n : sweep) fe_arms.push_back({"S=" + std::to_string(n), ArmKind::kSuf, n});
  const std::vector<ArmSpec> basic_arms{{"basic", ArmKind::kLastStep, 1}};

  const auto num_classes = fe.model->config().num_classes;
  const auto spec = RegionSpec::per_class(num_classes);
  std::vector<std::vector<RegionReport>> per_arm(1 + fe_arms.size());
  const auto sched_basic = schedule_for(basic, cfg);
  const auto sched_fe = schedule_for(fe, cfg);
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const auto seed = derive_seed(cfg.seed(), {static_cast<uint64_t>(i)});
    auto score = [&](const torch::Tensor& probs) {
      return region_report(decode_argmax(probs, rec.spacing()), rec.labels, spec);
    };
    per_arm[0].push_back(score(predict_case_arms(basic.model, sched_basic, rec.image, opts, basic_arms, seed, true)[0]));
    auto probs = predict_case_arms(fe.model, sched_fe, rec.image, opts, fe_arms, seed);
    for (size_t a = 0; a < fe_arms.size(); ++a) per_arm[a + 1].push_back(score(probs[a]));
    log_info("ablation: scored " + rec.case_id);
  }

  auto row = [&](const std::string& name, const std::vector<RegionReport>& reports, std::optional<double> ref) {
    const auto avg = average_reports(reports);
    return AblationRow{name, avg.mean_dice, avg.mean_hd95, ref};
  };
  const std::vector<double> module_refs{83.91, 84.32, 84.76, 85.35};
  const std::map<int64_t, double> sample_refs{{3, 85.06}, {4, 85.35}, {5, 85.32}, {6, 85.33}};
  AblationReport report;
  report.modules.push_back(row("basic", per_arm[0], module_refs[0]));
  for (size_t a = 0; a < 3; ++a) report.modules.push_back(row(fe_arms[a].name, per_arm[a + 1], module_refs[a + 1]));
  for (size_t j = 0; j < sweep.size(); ++j) {
    auto it = sample_refs.find(sweep[j]);
    report.samples.push_back(row(fe_arms[3 + j].name, per_arm[4 + j],
                                 it == sample_refs.end() ? std::nullopt : std::optional<double>(it->second)));
  }

  fs::create_directories(out);
  write_resolved_config(cfg, out);
  std::ofstream(out / "ablation.json") << report.to_json().dump(2) << '\n';
  std::ofstream(out / "ablation.md") << report.to_markdown();
  return report;
}

void write_overlay_ppm(const fs::path& path, const torch::Tensor& image, const torch::Tensor& gt, const torch::Tensor& pred) {
  static const uint8_t palette[][3] = {{0, 0, 0}, {230, 60, 60}, {60, 200, 80}, {70, 110, 240}, {240, 200, 40}, {200, 80, 220}};
  const int64_t z = gt.size(0) / 2;
  auto img = image[0][z].to(torch::kFloat64);
  const double lo = img.min().item<double>();
  const double hi = img.max().item<double>();
  auto gray = ((img - lo) / std::max(hi - lo, 1e-12) * 255.0).clamp(0, 255).to(torch::kUInt8).contiguous();
  auto g = gt[z].to(torch::kInt64).contiguous();
  auto p = pred[z].to(torch::kInt64).contiguous();
  const int64_t rows = gray.size(0), cols = gray.size(1);
  const auto* gp = gray.data_ptr<uint8_t>();
  const auto* lg = g.data_ptr<int64_t>();
  const auto* lp = p.data_ptr<int64_t>();

  std::vector<uint8_t> pixels(static_cast<size_t>(rows * cols * 3 * 3));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      const auto v = gp[r * cols + c];
      const int64_t labels[3] = {0, lg[r * cols + c], lp[r * cols + c]};
      for (int panel = 0; panel < 3; ++panel) {
        auto* px = &pixels[static_cast<size_t>(((r * 3 * cols) + panel * cols + c) * 3)];
        const auto label = labels[panel] % 6;
        for (int ch = 0; ch < 3; ++ch) {
          px[ch] = label == 0 ? v : static_cast<uint8_t>(0.5 * v + 0.5 * palette[label][ch]);
        }
      }
    }
  }
  fs::create_directories(path.parent_path());
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw IoError("cannot write " + path.string());
  outf << "P6\n" << 3 * cols << ' ' << rows << "\n255\n";
  outf.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace diffunet
