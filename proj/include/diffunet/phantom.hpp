#pragma once

#include "diffunet/volume_io.hpp"

#include <cstdint>
#include <string>

namespace diffunet {

enum class ShapeFamily { kEllipsoids, kBoxes };

ShapeFamily parse_shape_family(const std::string& name);

/// Synthetic nested-structure case. Class k occupies the k-th nested shape
/// minus the (k+1)-th, so foreground regions nest like WT > TC > ET.
struct PhantomSpec {
  Shape3 grid{40, 32, 32};
  int64_t num_classes = 4;
  int64_t modalities = 2;
  ShapeFamily family = ShapeFamily::kEllipsoids;
  double noise = 0.1;  // std of additive Gaussian noise
  uint64_t seed = 0;
  Spacing spacing{1.0, 1.0, 1.0};
};

/// Deterministic in spec.seed. Every class gets at least one voxel, or the
/// call throws ConfigError (grid too small for the requested nesting).
VolumeRecord generate_phantom(const PhantomSpec& spec, const std::string& case_id);

/// Mean intensity of class `label` in modality `modality` before noise.
double phantom_intensity(int64_t modality, int64_t label, int64_t num_classes);

}  // namespace diffunet
