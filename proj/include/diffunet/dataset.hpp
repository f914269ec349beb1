#pragma once

#include "diffunet/volume_io.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace diffunet {

struct CaseEntry {
  std::string id;
  std::string image;  // header paths relative to the dataset directory
  std::string label;
};

/// Dataset index: cases plus a train / val / test assignment.
struct Manifest {
  std::vector<CaseEntry> cases;
  std::map<std::string, std::vector<std::string>> splits;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  uint64_t seed = 0;

  const CaseEntry& find(const std::string& id) const;
  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

/// Largest-remainder apportionment of n cases over (train, val, test).
std::array<int64_t, 3> split_counts(int64_t n, const std::array<double, 3>& ratios);

/// Seeded shuffle of the case ids, then contiguous assignment by split_counts.
Manifest make_manifest(std::vector<CaseEntry> cases, const std::array<double, 3>& ratios, uint64_t seed);

void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);
Manifest read_manifest(const std::filesystem::path& dir);

/// Loads every case of a split; images are intensity-normalized when asked.
std::vector<VolumeRecord> load_split(const std::filesystem::path& dir, const Manifest& manifest,
                                     const std::string& split, bool normalize = true);

}  // namespace diffunet
