#pragma once

#include "diffunet/volume.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace diffunet {

enum class VolumeDType { kFloat32, kUInt8 };

/// Sidecar header of a raw volume. On disk: `<stem>.json` holding these
/// fields and `<stem>.raw` holding the little-endian C-order payload.
struct VolumeHeader {
  std::vector<int64_t> shape;  // (C, D, W, H)
  VolumeDType dtype = VolumeDType::kFloat32;
  Spacing spacing{1.0, 1.0, 1.0};
  std::string case_id;
  std::string payload;  // payload file name, relative to the header
};

struct RawVolume {
  VolumeHeader header;
  torch::Tensor data;  // (C, D, W, H); float32 or uint8 as stored
};

/// Writes `<stem>.json` + `<stem>.raw`. `data` is (C, D, W, H) or (D, W, H).
void write_raw_volume(const std::filesystem::path& stem, const torch::Tensor& data, VolumeDType dtype,
                      const Spacing& spacing, const std::string& case_id);

/// Reads a volume given its header path (`.json`) or stem.
/// Missing files -> IoError; bad header, unsupported dtype or payload size
/// mismatch -> FormatError.
RawVolume read_raw_volume(const std::filesystem::path& path);

struct VolumeRecord {
  std::string case_id;
  ImageVolume image;
  LabelVolume labels;

  const Spacing& spacing() const { return labels.spacing; }
};

/// `<dir>/<case>_image.{json,raw}` (float32, M channels) and
/// `<dir>/<case>_label.{json,raw}` (uint8, 1 channel).
void write_record(const VolumeRecord& record, const std::filesystem::path& dir);
VolumeRecord read_record(const std::filesystem::path& image_header, const std::filesystem::path& label_header);

/// Per-modality z-score over nonzero voxels; zeros stay zero.
void normalize_intensity(ImageVolume& image);

}  // namespace diffunet
