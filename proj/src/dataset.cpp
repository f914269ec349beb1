#include "diffunet/dataset.hpp"

#include "diffunet/error.hpp"
#include "diffunet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace diffunet {

namespace {
constexpr const char* kSplitNames[3] = {"train", "val", "test"};
}

const CaseEntry& Manifest::find(const std::string& id) const {
  for (const auto& c : cases) {
    if (c.id == id) return c;
  }
  throw ConfigError("manifest has no case '" + id + "'");
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json jcases = nlohmann::json::array();
  for (const auto& c : cases) jcases.push_back({{"id", c.id}, {"image", c.image}, {"label", c.label}});
  return {{"cases", jcases}, {"splits", splits}, {"ratios", ratios}, {"seed", seed}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    for (const auto& c : j.at("cases")) {
      m.cases.push_back({c.at("id").get<std::string>(), c.at("image").get<std::string>(),
                         c.at("label").get<std::string>()});
    }
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    m.ratios = j.at("ratios").get<std::array<double, 3>>();
    m.seed = j.value("seed", uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::array<int64_t, 3> split_counts(int64_t n, const std::array<double, 3>& ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (n < 0 || !(total > 0.0) || std::any_of(ratios.begin(), ratios.end(), [](double r) { return r < 0.0; })) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  std::array<int64_t, 3> counts{};
  std::array<double, 3> remainder{};
  int64_t assigned = 0;
  for (size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratios[i] / total;
    counts[i] = static_cast<int64_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

Manifest make_manifest(std::vector<CaseEntry> cases, const std::array<double, 3>& ratios, uint64_t seed) {
  Manifest m;
  m.ratios = ratios;
  m.seed = seed;
  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.id);
  std::mt19937_64 rng(derive_seed(seed, {0x5b117ULL}));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto counts = split_counts(static_cast<int64_t>(ids.size()), ratios);
  size_t next = 0;
  for (size_t s = 0; s < 3; ++s) {
    auto& split = m.splits[kSplitNames[s]];
    for (int64_t i = 0; i < counts[s]; ++i) split.push_back(ids[next++]);
  }
  m.cases = std::move(cases);
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.to_json().dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw IoError("manifest not found: " + path.string());
  try {
    return Manifest::from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<VolumeRecord> load_split(const std::filesystem::path& dir, const Manifest& manifest,
                                     const std::string& split, bool normalize) {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) throw ConfigError("manifest has no split '" + split + "'");
  std::vector<VolumeRecord> records;
  for (const auto& id : it->second) {
    const auto& entry = manifest.find(id);
    VolumeRecord record;
    try {
      record = read_record(dir / entry.image, dir / entry.label);
    } catch (const Error& e) {
      rethrow_with_context(e, "case '" + id + "': ");
    }
    if (record.case_id.empty()) record.case_id = id;
    if (normalize) normalize_intensity(record.image);
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace diffunet
