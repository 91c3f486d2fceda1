#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace shapepoint {

// Grid extent in (depth, height, width) = (z, y, x) order.
struct Dims {
  int d = 0;
  int h = 0;
  int w = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  bool contains(int z, int y, int x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < d && y < h && x < w;
  }
  int axis(int a) const { return a == 0 ? d : (a == 1 ? h : w); }
  std::string str() const;

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Scalar intensity grid; data is C-ordered with index ((z*H)+y)*W+x.
struct VoxelVolume {
  Dims dims;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<float> data;

  VoxelVolume() = default;
  explicit VoxelVolume(Dims d, float fill = 0.0f) : dims(d), data(d.voxels(), fill) {}

  float& at(int z, int y, int x) { return data[dims.index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[dims.index(z, y, x)]; }

  // Throws ShapeError on length mismatch, non-finite values or bad spacing.
  void validate() const;
};

// Binary label grid, values exactly 0 or 1.
struct MaskVolume {
  Dims dims;
  std::vector<std::uint8_t> data;

  MaskVolume() = default;
  explicit MaskVolume(Dims d, std::uint8_t fill = 0) : dims(d), data(d.voxels(), fill) {}

  std::uint8_t& at(int z, int y, int x) { return data[dims.index(z, y, x)]; }
  std::uint8_t at(int z, int y, int x) const { return data[dims.index(z, y, x)]; }
  // Out-of-grid reads return background.
  std::uint8_t get(int z, int y, int x) const { return dims.contains(z, y, x) ? at(z, y, x) : 0; }

  std::size_t foreground_count() const;
  void validate() const;
};

// Number of 6-connected foreground components.
int count_components(const MaskVolume& mask);

// Keeps only the largest 6-connected component (lowest-index seed wins ties).
MaskVolume largest_component(const MaskVolume& mask);

}  // namespace shapepoint
