#include "diffunet/checkpoint.hpp"

#include "diffunet/error.hpp"

#include <string>

namespace diffunet {

namespace {

constexpr const char* kFormatTag = "diffunet-checkpoint-v1";

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
    c10::IValue tag;
    if (!archive.try_read("format", tag) || !tag.isString() || tag.toStringRef() != kFormatTag) {
      throw FormatError("not a diffunet checkpoint: " + path.string());
    }
  } catch (const c10::Error& e) {
    throw FormatError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue value;
  if (!archive.try_read(key, value) || !value.isString()) throw FormatError("checkpoint missing '" + key + "'");
  return value.toStringRef();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, DiffUNet& model, const nlohmann::json& config,
                     torch::optim::Optimizer* optimizer, const TrainingState& state) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kFormatTag)));
  archive.write("config", c10::IValue(config.dump()));
  nlohmann::json counters = {{"epoch", state.epoch},
                             {"global_step", state.global_step},
                             {"best_val_dice", state.best_val_dice},
                             {"info", state.info}};
  archive.write("state", c10::IValue(counters.dump()));

  torch::serialize::OutputArchive model_archive;
  model->save(model_archive);
  archive.write("model", model_archive);
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive optimizer_archive;
    optimizer->save(optimizer_archive);
    archive.write("optimizer", optimizer_archive);
  }
  if (state.generator_state.defined()) archive.write("generator_state", state.generator_state);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  LoadedCheckpoint out;
  try {
    out.config = nlohmann::json::parse(read_string(archive, "config"));
    auto counters = nlohmann::json::parse(read_string(archive, "state"));
    out.state.epoch = counters.at("epoch").get<int64_t>();
    out.state.global_step = counters.at("global_step").get<int64_t>();
    out.state.best_val_dice = counters.at("best_val_dice").get<double>();
    out.state.info = counters.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint metadata unreadable in " + path.string() + ": " + e.what());
  }
  if (!out.config.contains("model")) throw FormatError("checkpoint config lacks a model section");
  out.model = DiffUNet(model_config_from_json(out.config["model"]));
  try {
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    out.model->load(model_archive);
    torch::Tensor gen_state;
    if (archive.try_read("generator_state", gen_state)) out.state.generator_state = gen_state;
  } catch (const c10::Error& e) {
    throw FormatError("checkpoint parameters do not match the model in " + path.string() + ": " +
                      e.what_without_backtrace());
  }
  out.model->eval();
  return out;
}

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
  auto archive = open_archive(path);
  torch::serialize::InputArchive optimizer_archive;
  if (!archive.try_read("optimizer", optimizer_archive)) {
    throw FormatError("checkpoint has no optimizer state: " + path.string());
  }
  try {
    optimizer.load(optimizer_archive);
  } catch (const c10::Error& e) {
    throw FormatError("optimizer state mismatch in " + path.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace diffunet
