#include "diffunet/commands.hpp"
#include "diffunet/error.hpp"
#include "diffunet/log.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App app{"Diffusion volumetric segmentation: phantoms, training, fused inference, metrics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
  bool force = false;
  bool export_slices = false;
  bool quiet = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config file)");
    sub->add_option("--override", overrides, "dotted key=value, e.g. train.epochs=50, repeatable")
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    sub->add_flag("--quiet", quiet, "warnings and errors only");
    return sub;
  };

  auto* gen = common(app.add_subcommand("gen-data", "write synthetic phantoms and a split manifest"));
  gen->add_flag("--force", force, "replace a non-empty target directory");
  common(app.add_subcommand("train", "train a denoiser on the train split"));
  auto* infer = common(app.add_subcommand("infer", "sliding-window fused inference on a split"));
  infer->add_flag("--export-slices", export_slices, "write mid-axial overlay images");
  common(app.add_subcommand("eval", "Dice / HD95 table for saved predictions"));
  common(app.add_subcommand("ablate", "module ablation and S sweep report"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(diffunet::ErrorCategory::kConfig);
  }
  if (quiet) diffunet::set_log_level(diffunet::LogLevel::kWarn);

  try {
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const auto cfg = diffunet::resolve_config(file, seed, overrides);
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") {
      auto manifest = diffunet::cmd_gen_data(cfg, force);
      for (const auto& [split, ids] : manifest.splits) std::cout << split << ": " << ids.size() << " cases\n";
    } else if (name == "train") {
      auto result = diffunet::cmd_train(cfg);
      std::cout << "last: " << result.last_checkpoint.string() << "\nbest: " << result.best_checkpoint.string()
                << " (val dice " << result.best_val_dice << ")\n";
    } else if (name == "infer") {
      for (const auto& stem : diffunet::cmd_infer(cfg, export_slices)) std::cout << stem.string() << '\n';
    } else if (name == "eval") {
      auto rows = diffunet::cmd_eval(cfg);
      for (const auto& row : rows) std::cout << row.name << "  mean dice " << row.report.mean_dice << '\n';
    } else if (name == "ablate") {
      std::cout << diffunet::cmd_ablate(cfg).to_markdown();
    }
  } catch (const diffunet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(diffunet::ErrorCategory::kInternal);
  }
  return 0;
}
