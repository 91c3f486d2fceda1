#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shapepoint/volume.hpp"

namespace shapepoint {

using Point3 = std::array<double, 3>;

// N x 3 point matrix in (z, y, x) order. Normalized sets hold voxel
// coordinates divided by (D, H, W).
struct PointSet {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws ContractError unless every coordinate is finite and in [0,1] and,
  // when expected_rows > 0, the row count matches.
  void validate(std::size_t expected_rows = 0) const;
};

}  // namespace shapepoint

namespace shapepoint::surface {

struct TriangleMesh {
  std::vector<Point3> vertices;  // voxel coordinates (z, y, x)
  std::vector<std::array<int, 3>> triangles;
};

// Marching cubes over samples at voxel centers. Ambiguous faces separate
// diagonal foreground corners, which keeps the surface consistent with
// 6-connected foreground and makes every closed component watertight.
// Triangles are wound so that closed surfaces have positive signed volume.
TriangleMesh marching_cubes(const MaskVolume& mask, double iso = 0.5);

// Same extraction over an arbitrary scalar field; `inside` is value > iso.
TriangleMesh marching_cubes(std::span<const float> field, Dims dims, double iso);

struct MeshStats {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t faces = 0;
  bool watertight = false;  // every undirected edge used by exactly two triangles
  bool has_degenerate = false;
  long euler_characteristic() const {
    return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces);
  }
};

MeshStats mesh_stats(const TriangleMesh& mesh);
double mesh_area(const TriangleMesh& mesh);
double mesh_signed_volume(const TriangleMesh& mesh);

// Greedy maximin selection in the coordinates given. The first pick is
// uniform by seed, ties go to the lowest candidate index, and if k exceeds
// the pool the remainder is drawn uniformly with replacement.
// Returns candidate indices in selection order.
std::vector<std::size_t> farthest_point_sampling_indices(std::span<const Point3> candidates,
                                                         std::size_t k, std::uint64_t seed);

std::vector<Point3> farthest_point_sampling(std::span<const Point3> candidates, std::size_t k,
                                            std::uint64_t seed);

// Desk-scale default; 2048 reproduces the original setting.
inline constexpr std::size_t kDefaultPoints = 512;
inline constexpr std::size_t kPaperPoints = 2048;
inline constexpr double kDefaultNoiseRange = 0.005;

// marching_cubes -> vertices -> farthest_point_sampling (voxel coordinates)
// -> divide by (D, H, W).
PointSet gt_points(const MaskVolume& mask, std::size_t n_points, std::uint64_t seed);

PointSet normalize(std::span<const Point3> voxel_points, Dims dims);
std::vector<Point3> denormalize(const PointSet& p, Dims dims);

// Uniform noise in [-range, range] per coordinate, then clamp to [0,1].
PointSet perturb_points(const PointSet& p, double range, std::uint64_t seed);

// ASCII PLY with x, y, z as de-normalized voxel coordinates.
void write_ply(const std::filesystem::path& file, const PointSet& p, Dims dims);
// CSV with header `z,y,x` and normalized coordinates.
void write_csv(const std::filesystem::path& file, const PointSet& p);
PointSet read_csv(const std::filesystem::path& file);
// Vertex count declared in a PLY header.
std::size_t read_ply_vertex_count(const std::filesystem::path& file);

}  // namespace shapepoint::surface
