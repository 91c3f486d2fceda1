#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "shapepoint/rng.hpp"
#include "shapepoint/surface.hpp"
#include "shapepoint/volume.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("shapepoint_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<shapepoint::Point3> random_points(shapepoint::Rng& rng, std::size_t n) {
  std::vector<shapepoint::Point3> v(n);
  for (auto& p : v) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  return v;
}

inline shapepoint::PointSet random_set(shapepoint::Rng& rng, std::size_t n) {
  return {random_points(rng, n)};
}

inline shapepoint::MaskVolume ball(shapepoint::Dims d, double cz, double cy, double cx, double r) {
  shapepoint::MaskVolume m(d);
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        const double a = z - cz, b = y - cy, c = x - cx;
        m.at(z, y, x) = a * a + b * b + c * c <= r * r;
      }
  return m;
}

// Random blob mask: each voxel foreground with probability `fill`.
inline shapepoint::MaskVolume random_mask(shapepoint::Rng& rng, shapepoint::Dims d, double fill) {
  shapepoint::MaskVolume m(d);
  for (auto& v : m.data) v = rng.uniform() < fill;
  if (m.foreground_count() == 0) m.data[rng.index(m.data.size())] = 1;
  return m;
}

}  // namespace testutil
