#include "diffunet/volume_io.hpp"

#include "diffunet/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace diffunet {

namespace {

std::filesystem::path with_ext(std::filesystem::path stem, const char* ext) {
  if (stem.extension() == ".json" || stem.extension() == ".raw") stem.replace_extension();
  stem += ext;
  return stem;
}

const char* dtype_name(VolumeDType d) { return d == VolumeDType::kUInt8 ? "uint8" : "float32"; }

size_t dtype_size(VolumeDType d) { return d == VolumeDType::kUInt8 ? 1 : 4; }

// Payload is little-endian; swap on big-endian hosts.
void to_little_endian(std::vector<char>& bytes, size_t width) {
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = 0; i + width <= bytes.size(); i += width) std::reverse(bytes.begin() + i, bytes.begin() + i + width);
  } else {
    (void)bytes;
    (void)width;
  }
}

}  // namespace

void write_raw_volume(const std::filesystem::path& stem, const torch::Tensor& data, VolumeDType dtype,
                      const Spacing& spacing, const std::string& case_id) {
  auto volume = data.dim() == 3 ? data.unsqueeze(0) : data;
  if (volume.dim() != 4) throw ShapeError("write_raw_volume expects a 3-D or 4-D tensor");
  volume = volume.to(dtype == VolumeDType::kUInt8 ? torch::kUInt8 : torch::kFloat32).contiguous();

  const auto header_path = with_ext(stem, ".json");
  const auto payload_path = with_ext(stem, ".raw");
  if (header_path.has_parent_path()) std::filesystem::create_directories(header_path.parent_path());

  nlohmann::json header = {{"format", "diffunet-raw"},
                           {"version", 1},
                           {"shape", volume.sizes().vec()},
                           {"dtype", dtype_name(dtype)},
                           {"spacing", spacing},
                           {"modalities", volume.size(0)},
                           {"byte_order", "little"},
                           {"case_id", case_id},
                           {"payload", payload_path.filename().string()}};
  std::ofstream hs(header_path);
  if (!hs) throw IoError("cannot write " + header_path.string());
  hs << header.dump(2) << '\n';

  const auto nbytes = static_cast<size_t>(volume.numel()) * dtype_size(dtype);
  std::vector<char> bytes(nbytes);
  std::memcpy(bytes.data(), volume.data_ptr(), nbytes);
  to_little_endian(bytes, dtype_size(dtype));
  std::ofstream ps(payload_path, std::ios::binary);
  if (!ps) throw IoError("cannot write " + payload_path.string());
  ps.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!ps) throw IoError("short write to " + payload_path.string());
}

RawVolume read_raw_volume(const std::filesystem::path& path) {
  const auto header_path = with_ext(path, ".json");
  std::ifstream hs(header_path);
  if (!hs) throw IoError("volume header not found: " + header_path.string());

  RawVolume out;
  try {
    auto header = nlohmann::json::parse(hs);
    if (header.value("format", "") != "diffunet-raw") throw FormatError("not a diffunet-raw header: " + header_path.string());
    if (header.value("byte_order", "little") != "little") {
      throw FormatError("unsupported byte order in " + header_path.string());
    }
    const auto dtype = header.at("dtype").get<std::string>();
    if (dtype == "float32") {
      out.header.dtype = VolumeDType::kFloat32;
    } else if (dtype == "uint8") {
      out.header.dtype = VolumeDType::kUInt8;
    } else {
      throw FormatError("unsupported dtype '" + dtype + "' in " + header_path.string());
    }
    out.header.shape = header.at("shape").get<std::vector<int64_t>>();
    out.header.spacing = header.at("spacing").get<Spacing>();
    out.header.case_id = header.value("case_id", "");
    out.header.payload = header.at("payload").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt volume header " + header_path.string() + ": " + e.what());
  }
  const auto& shape = out.header.shape;
  if (shape.size() != 4 || std::any_of(shape.begin(), shape.end(), [](int64_t d) { return d < 1; })) {
    throw FormatError("header shape must be 4 positive dims in " + header_path.string());
  }
  for (double s : out.header.spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw FormatError("non-positive spacing in " + header_path.string());
  }

  const auto payload_path = header_path.parent_path() / out.header.payload;
  std::ifstream ps(payload_path, std::ios::binary | std::ios::ate);
  if (!ps) throw IoError("volume payload not found: " + payload_path.string());
  const auto found = static_cast<size_t>(ps.tellg());
  size_t count = 1;
  for (auto d : shape) count *= static_cast<size_t>(d);
  const size_t width = dtype_size(out.header.dtype);
  if (found != count * width) {
    throw FormatError("payload size mismatch in " + payload_path.string() + ": expected " +
                      std::to_string(count * width) + " bytes, found " + std::to_string(found));
  }
  std::vector<char> bytes(found);
  ps.seekg(0);
  ps.read(bytes.data(), static_cast<std::streamsize>(found));
  to_little_endian(bytes, width);
  auto dtype = out.header.dtype == VolumeDType::kUInt8 ? torch::kUInt8 : torch::kFloat32;
  out.data = torch::empty(shape, dtype);
  std::memcpy(out.data.data_ptr(), bytes.data(), found);
  return out;
}

void write_record(const VolumeRecord& record, const std::filesystem::path& dir) {
  write_raw_volume(dir / (record.case_id + "_image"), record.image.data, VolumeDType::kFloat32, record.spacing(),
                   record.case_id);
  write_raw_volume(dir / (record.case_id + "_label"), record.labels.data, VolumeDType::kUInt8, record.spacing(),
                   record.case_id);
}

VolumeRecord read_record(const std::filesystem::path& image_header, const std::filesystem::path& label_header) {
  auto image = read_raw_volume(image_header);
  auto labels = read_raw_volume(label_header);
  if (labels.header.shape[0] != 1) throw FormatError("label volume must have one channel: " + label_header.string());
  if (!std::equal(image.header.shape.begin() + 1, image.header.shape.end(), labels.header.shape.begin() + 1)) {
    throw FormatError("image and label spatial shapes differ for case '" + image.header.case_id + "'");
  }
  VolumeRecord record;
  record.case_id = image.header.case_id;
  record.image.data = image.data.to(torch::kFloat32);
  record.labels.data = labels.data[0].to(torch::kInt64);
  record.labels.spacing = labels.header.spacing;
  return record;
}

void normalize_intensity(ImageVolume& image) {
  image.normalization.clear();
  auto data = image.data.to(torch::kFloat32).clone();
  for (int64_t m = 0; m < data.size(0); ++m) {
    auto channel = data[m];
    auto nonzero = channel != 0;
    IntensityStats stats;
    if (nonzero.any().item<bool>()) {
      auto values = channel.masked_select(nonzero).to(torch::kFloat64);
      stats.mean = values.mean().item<double>();
      stats.stddev = values.std(/*unbiased=*/false).item<double>();
      if (stats.stddev < 1e-8) stats.stddev = 1.0;
      channel.copy_(torch::where(nonzero, (channel - stats.mean) / stats.stddev, channel));
    }
    image.normalization.push_back(stats);
  }
  image.data = data;
}

}  // namespace diffunet
