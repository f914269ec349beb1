#include "diffunet/config.hpp"

#include "diffunet/error.hpp"

#include <fstream>
#include <sstream>

namespace diffunet {

namespace {

using nlohmann::json;

json without(json j, const std::string& key) {
  j.erase(key);
  return j;
}

bool compatible(const json& def, const json& value) {
  if (def.is_null()) return value.is_null() || value.is_number();  // optional numbers
  if (def.is_number_float()) return value.is_number();
  if (def.is_number_unsigned()) return value.is_number_unsigned() || (value.is_number_integer() && value.get<int64_t>() >= 0);
  if (def.is_number_integer()) return value.is_number_integer();
  return def.type() == value.type();
}

void merge_into(json& base, const json& patch, const std::string& prefix, std::vector<std::string>& unknown,
                std::vector<std::string>& mistyped) {
  for (const auto& [key, value] : patch.items()) {
    const auto path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) {
      unknown.push_back(path);
      continue;
    }
    auto& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) {
        mistyped.push_back(path + " (expected object)");
        continue;
      }
      merge_into(slot, value, path, unknown, mistyped);
    } else if (!compatible(slot, value)) {
      mistyped.push_back(path + " (expected " + std::string(slot.is_null() ? "number or null" : slot.type_name()) +
                         ", got " + value.type_name() + ")");
    } else if (slot.is_array() && !slot.empty() && value.size() != slot.size() && slot.size() == 3) {
      mistyped.push_back(path + " (expected 3 elements)");
    } else {
      slot = value;
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad ") + what + " config: " + e.what());
  }
}

}  // namespace

json default_config() {
  ModelConfig model;
  model.in_modalities = 2;
  model.num_classes = 4;
  TrainConfig train;
  InferenceOptions inference;
  PhantomSpec phantom;

  json tree;
  tree["seed"] = uint64_t{0};
  tree["data"] = {{"dir", "data"},
                  {"num_cases", 10},
                  {"grid", phantom.grid},
                  {"num_classes", phantom.num_classes},
                  {"modalities", phantom.modalities},
                  {"family", "ellipsoids"},
                  {"noise", phantom.noise},
                  {"spacing", phantom.spacing},
                  {"ratios", std::array<double, 3>{0.7, 0.1, 0.2}},
                  {"normalize", true}};
  tree["model"] = without(to_json(model), "diffusion_steps");
  tree["diffusion"] = to_json(DiffusionConfig{});
  tree["train"] = without(to_json(train), "seed");
  tree["train"]["out_dir"] = "runs/train";
  tree["train"]["resume"] = "";
  auto inf = to_json(inference);
  tree["fusion"] = inf["fusion"];
  tree["inference"] = without(inf, "fusion");
  tree["inference"]["checkpoint"] = "runs/train/best.ckpt";
  tree["inference"]["split"] = "test";
  tree["inference"]["out_dir"] = "runs/infer";
  tree["inference"]["zero_features"] = false;
  tree["eval"] = {{"pred_dir", "runs/infer"}, {"split", "test"}, {"regions", "per_class"}, {"out", "runs/eval/metrics"}};
  tree["ablate"] = {{"checkpoint_basic", ""},
                    {"checkpoint_fe", ""},
                    {"split", "val"},
                    {"samples", std::vector<int64_t>{3, 4, 5, 6}},
                    {"out_dir", "runs/ablate"}};
  return tree;
}

json merge_config(const json& base, const json& patch, const std::string& source) {
  if (!patch.is_object()) throw ConfigError(source + ": top level must be an object");
  json out = base;
  std::vector<std::string> unknown, mistyped;
  merge_into(out, patch, "", unknown, mistyped);
  std::string msg;
  if (!unknown.empty()) msg += "unknown keys: " + join(unknown);
  if (!mistyped.empty()) msg += (msg.empty() ? "" : "; ") + std::string("type mismatch: ") + join(mistyped);
  if (!msg.empty()) throw ConfigError(source + ": " + msg);
  return out;
}

json parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json patch = json::object();
  json* node = &patch;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
    parts.push_back(part);
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
  return patch;
}

void check_conflicts(const json& tree) {
  std::vector<std::string> conflicts;
  const auto& data = tree.at("data");
  const auto& model = tree.at("model");
  if (model.at("in_modalities") != data.at("modalities")) conflicts.push_back("model.in_modalities vs data.modalities");
  if (model.at("num_classes") != data.at("num_classes")) conflicts.push_back("model.num_classes vs data.num_classes");
  const auto scales = model.at("scales").get<std::vector<int64_t>>();
  const int64_t factor = scales.empty() ? 1 : scales.back();
  for (const char* section : {"train", "inference"}) {
    for (auto p : tree.at(section).at("patch_size").get<std::vector<int64_t>>()) {
      if (factor > 0 && p % factor != 0) {
        conflicts.push_back(std::string(section) + ".patch_size vs model.scales (need multiples of " +
                            std::to_string(factor) + ")");
        break;
      }
    }
  }
  if (!conflicts.empty()) throw ConfigError("conflicting keys: " + join(conflicts));
}

uint64_t RunConfig::seed() const { return tree.at("seed").get<uint64_t>(); }

const json& RunConfig::section(const std::string& name) const {
  if (!tree.contains(name)) throw ConfigError("config has no section '" + name + "'");
  return tree.at(name);
}

ModelConfig RunConfig::model() const {
  return guarded("model", [&] {
    auto j = section("model");
    j["diffusion_steps"] = section("diffusion").at("steps");
    return model_config_from_json(j);
  });
}

DiffusionConfig RunConfig::diffusion() const { return diffusion_config_from_json(section("diffusion")); }

TrainConfig RunConfig::train() const {
  auto j = section("train");
  j["seed"] = seed();
  return train_config_from_json(j, j.at("validation"), j.at("validation").at("fusion"));
}

InferenceOptions RunConfig::inference() const {
  return inference_options_from_json(section("inference"), section("fusion"));
}

PhantomSpec RunConfig::phantom() const {
  return guarded("data", [&] {
    const auto& d = section("data");
    PhantomSpec spec;
    spec.grid = d.at("grid").get<Shape3>();
    spec.num_classes = d.at("num_classes").get<int64_t>();
    spec.modalities = d.at("modalities").get<int64_t>();
    spec.family = parse_shape_family(d.at("family").get<std::string>());
    spec.noise = d.at("noise").get<double>();
    spec.spacing = d.at("spacing").get<Spacing>();
    return spec;
  });
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, std::optional<uint64_t> seed,
                         const std::vector<std::string>& overrides) {
  json tree = default_config();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot open config file " + file->string());
    json loaded = json::parse(in, nullptr, false);
    if (loaded.is_discarded()) throw FormatError("config file " + file->string() + " is not valid JSON");
    tree = merge_config(tree, loaded, file->string());
  }
  if (seed) tree["seed"] = *seed;
  for (const auto& o : overrides) tree = merge_config(tree, parse_override(o), "--override " + o);
  check_conflicts(tree);
  RunConfig cfg{tree};
  // parse every section once so bad values fail before any work starts
  cfg.model();
  cfg.diffusion().make();
  cfg.train();
  cfg.inference();
  cfg.phantom();
  return cfg;
}

std::filesystem::path write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << cfg.tree.dump(2) << '\n';
  return path;
}

}  // namespace diffunet
