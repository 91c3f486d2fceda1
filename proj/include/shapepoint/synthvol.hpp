#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shapepoint/volume.hpp"

namespace shapepoint::synthvol {

enum class Preset { kSimple, kComplex };

std::string to_string(Preset p);
Preset preset_from_string(const std::string& s);

// Minimum distance between the shape and every face of the grid.
inline constexpr int kShapeMargin = 4;

struct SynthConfig {
  Preset preset = Preset::kSimple;
  Dims dims{32, 32, 32};
  int lobe_min = 0;
  int lobe_max = 0;
  double deformation = 0.08;  // relative radial amplitude of the smooth deformation
  double noise = 0.4;         // noise standard deviation relative to contrast
  double contrast = 1.0;      // foreground minus background intensity
  std::uint64_t seed = 0;
  // Semi-axis range in voxels; 0 selects a range derived from dims.
  double radius_min = 0.0;
  double radius_max = 0.0;
  double exponent_min = 1.8;  // superellipsoid exponent range (2 = ellipsoid)
  double exponent_max = 2.6;
  double center_jitter = 1.5;  // voxels

  // Preset defaults; explicit fields may be overridden afterwards.
  static SynthConfig make(Preset preset, Dims dims, std::uint64_t seed);

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct GeneratedCase {
  VoxelVolume volume;
  MaskVolume mask;
  std::uint64_t effective_seed = 0;  // differs from the requested seed after regeneration
  int regenerations = 0;
};

GeneratedCase generate_case(const SynthConfig& config, std::uint64_t case_seed);

// Seed of case `index` for a dataset generated from `master_seed`.
std::uint64_t case_seed(std::uint64_t master_seed, std::uint64_t index);

struct PaddedCase {
  VoxelVolume volume;
  MaskVolume mask;
};

// Pads every face by `margin` voxels. The volume is padded with the mean
// background intensity (mask == 0), the mask with 0.
PaddedCase pad_volume(const VoxelVolume& v, const MaskVolume& m, int margin);

// Sphericity pi^(1/3) (6V)^(2/3) / A with V the voxel count and A the area
// of the marching-cubes surface.
double sphericity(const MaskVolume& mask);

// -- dataset manifest ---------------------------------------------------------

enum class Split { kTrain, kValidation, kTest };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest directory
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestEntry> cases;
  std::array<double, 3> ratios{0.5, 0.25, 0.25};
  std::uint64_t split_seed = 0;
  std::string config_json;  // snapshot of the generating configuration, may be empty

  std::vector<const ManifestEntry*> in_split(Split s) const;
  std::size_t count(Split s) const;
};

// Deterministic shuffle then rounded split; remainder goes to train.
DatasetManifest split_dataset(const std::vector<std::string>& case_ids,
                              std::array<double, 3> ratios, std::uint64_t seed);

void store_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& file);

// -- case container -------------------------------------------------------------

struct CaseMeta {
  std::uint64_t seed = 0;
  std::string preset;
};

// Writes `dir/volume.raw`, `dir/mask.raw` and `dir/meta.json`. The directory
// is written under a temporary name and renamed into place.
void store_case(const std::filesystem::path& dir, const VoxelVolume& v, const MaskVolume& m,
                const CaseMeta& meta = {});

struct LoadedCase {
  VoxelVolume volume;
  MaskVolume mask;
  CaseMeta meta;
};

// Throws FormatError naming the offending field on malformed input.
LoadedCase load_case(const std::filesystem::path& dir);

}  // namespace shapepoint::synthvol
