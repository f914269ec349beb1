#pragma once

#include "diffunet/diffusion.hpp"
#include "diffunet/inference.hpp"
#include "diffunet/model.hpp"
#include "diffunet/phantom.hpp"
#include "diffunet/training.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace diffunet {

/// Built-in defaults; also the schema. Any key absent here is rejected.
nlohmann::json default_config();

/// Recursively overlays `patch` onto `base`. Unknown keys and type mismatches
/// are collected and reported together in one ConfigError naming `source`.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& patch, const std::string& source);

/// "a.b.c=value": value is parsed as JSON when it parses, else taken as a string.
nlohmann::json parse_override(const std::string& assignment);

/// Merged run configuration. Precedence: overrides > --seed > file > defaults.
struct RunConfig {
  nlohmann::json tree;

  uint64_t seed() const;
  ModelConfig model() const;
  DiffusionConfig diffusion() const;
  TrainConfig train() const;
  InferenceOptions inference() const;
  PhantomSpec phantom() const;  // seed left at 0; per-case seeds come from seed()
  const nlohmann::json& section(const std::string& name) const;
};

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, std::optional<uint64_t> seed,
                         const std::vector<std::string>& overrides);

/// Checks cross-section consistency (model vs data, patch divisibility).
void check_conflicts(const nlohmann::json& tree);

/// Writes `resolved_config.json` into `dir`; the file is a valid --config input.
std::filesystem::path write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace diffunet
