#include "shapepoint/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "shapepoint/errors.hpp"
#include "shapepoint/io.hpp"
#include "shapepoint/kernels.hpp"
#include "shapepoint/rng.hpp"

namespace shapepoint {

void PointSet::validate(std::size_t expected_rows) const {
  if (expected_rows > 0 && points.size() != expected_rows)
    throw ContractError("point set has " + std::to_string(points.size()) + " rows, expected " +
                        std::to_string(expected_rows));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (double c : points[i])
      if (!std::isfinite(c) || c < 0.0 || c > 1.0)
        throw ContractError("point " + std::to_string(i) + " has a coordinate outside [0,1]");
}

}  // namespace shapepoint

namespace shapepoint::surface {

namespace {

// Cube corner c has offset (dz, dy, dx) = (c>>2 & 1, c>>1 & 1, c & 1).
constexpr int corner_offset(int c, int axis) { return (c >> (2 - axis)) & 1; }

struct CubeTables {
  // Local edge id for an unordered corner pair, -1 if not an edge.
  int edge_of[8][8];
  // Lower corner and axis (0=z,1=y,2=x) of each local edge.
  int edge_corner[12];
  int edge_axis[12];
  // Face corners in counter-clockwise order around the outward normal.
  int face[6][4];

  CubeTables() {
    for (auto& row : edge_of) std::fill(std::begin(row), std::end(row), -1);
    int e = 0;
    for (int a = 0; a < 8; ++a)
      for (int axis = 0; axis < 3; ++axis) {
        const int bit = 1 << (2 - axis);
        if (a & bit) continue;
        const int b = a | bit;
        edge_of[a][b] = edge_of[b][a] = e;
        edge_corner[e] = a;
        edge_axis[e] = axis;
        ++e;
      }
    int f = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int side = 0; side < 2; ++side) {
        int cs[4], n = 0;
        for (int c = 0; c < 8; ++c)
          if (corner_offset(c, axis) == side) cs[n++] = c;
        // In-plane axes (u, v) chosen so that u x v points along the outward
        // normal, then sort corners by angle around the face centre.
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        const double sign = side ? 1.0 : -1.0;
        std::sort(cs, cs + 4, [&](int a, int b) {
          auto angle = [&](int c) {
            return std::atan2(sign * (corner_offset(c, v) - 0.5), corner_offset(c, u) - 0.5);
          };
          return angle(a) < angle(b);
        });
        std::copy(cs, cs + 4, face[f]);
        ++f;
      }
  }
};

const CubeTables& tables() {
  static const CubeTables t;
  return t;
}

}  // namespace

TriangleMesh marching_cubes(std::span<const float> field, Dims d, double iso) {
  if (field.size() != d.voxels()) throw ShapeError("marching_cubes: field size does not match dims");
  const auto& tb = tables();
  TriangleMesh mesh;
  std::vector<int> vid(d.voxels() * 3, -1);

  auto vertex_for = [&](int z, int y, int x, int local_edge) -> int {
    const int a = tb.edge_corner[local_edge], axis = tb.edge_axis[local_edge];
    const int az = z + corner_offset(a, 0), ay = y + corner_offset(a, 1), ax = x + corner_offset(a, 2);
    const std::size_t key = d.index(az, ay, ax) * 3 + axis;
    if (vid[key] >= 0) return vid[key];
    const int bz = az + (axis == 0), by = ay + (axis == 1), bx = ax + (axis == 2);
    const double va = field[d.index(az, ay, ax)], vb = field[d.index(bz, by, bx)];
    const double t = (iso - va) / (vb - va);
    Point3 p{double(az), double(ay), double(ax)};
    p[axis] += t;
    vid[key] = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    return vid[key];
  };

  for (int z = 0; z + 1 < d.d; ++z)
    for (int y = 0; y + 1 < d.h; ++y)
      for (int x = 0; x + 1 < d.w; ++x) {
        bool inside[8];
        int n_in = 0;
        for (int c = 0; c < 8; ++c) {
          inside[c] = field[d.index(z + corner_offset(c, 0), y + corner_offset(c, 1), x + corner_offset(c, 2))] > iso;
          n_in += inside[c];
        }
        if (n_in == 0 || n_in == 8) continue;

        // On every face, walk the corners counter-clockwise and join each
        // background->foreground crossing to the next crossing. Each crossing
        // edge is an entry on exactly one of its two faces, so `next` is a
        // permutation of the crossing edges made of disjoint cycles. The rule
        // depends only on the face values, so neighbouring cubes agree.
        int next[12];
        std::fill(std::begin(next), std::end(next), -1);
        for (const auto& fc : tb.face) {
          int crossing[4];
          bool entry[4];
          for (int j = 0; j < 4; ++j) {
            const int a = fc[j], b = fc[(j + 1) % 4];
            crossing[j] = inside[a] != inside[b] ? tb.edge_of[a][b] : -1;
            entry[j] = !inside[a] && inside[b];
          }
          for (int j = 0; j < 4; ++j) {
            if (crossing[j] < 0 || !entry[j]) continue;
            for (int s = 1; s < 4; ++s) {
              const int m = (j + s) % 4;
              if (crossing[m] >= 0) {
                next[crossing[j]] = crossing[m];
                break;
              }
            }
          }
        }

        bool used[12] = {};
        for (int e = 0; e < 12; ++e) {
          if (next[e] < 0 || used[e]) continue;
          int cycle[12], len = 0;
          for (int c = e; !used[c]; c = next[c]) {
            if (next[c] < 0) throw InternalError("marching_cubes: open contour");
            used[c] = true;
            cycle[len++] = c;
          }
          const int v0 = vertex_for(z, y, x, cycle[0]);
          for (int i = 1; i + 1 < len; ++i)
            mesh.triangles.push_back({v0, vertex_for(z, y, x, cycle[i]), vertex_for(z, y, x, cycle[i + 1])});
        }
      }
  return mesh;
}

TriangleMesh marching_cubes(const MaskVolume& mask, double iso) {
  const Dims d = mask.dims;
  if (d.d < 2 || d.h < 2 || d.w < 2) throw GeometryError("marching_cubes: grid must be at least 2 voxels per axis");
  const std::size_t fg = mask.foreground_count();
  if (fg == 0) throw GeometryError("marching_cubes: mask is empty");
  if (fg == d.voxels()) throw GeometryError("marching_cubes: mask is full");
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        const bool border = z == 0 || y == 0 || x == 0 || z == d.d - 1 || y == d.h - 1 || x == d.w - 1;
        if (border && mask.at(z, y, x))
          throw GeometryError("marching_cubes: foreground touches the volume boundary; pad the mask first");
      }
  std::vector<float> field(mask.data.begin(), mask.data.end());
  return marching_cubes(field, d, iso);
}

MeshStats mesh_stats(const TriangleMesh& mesh) {
  MeshStats s;
  s.vertices = mesh.vertices.size();
  s.faces = mesh.triangles.size();
  std::unordered_map<std::uint64_t, int> edge_use;
  const int nv = static_cast<int>(mesh.vertices.size());
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      if (t[i] < 0 || t[i] >= nv) throw InternalError("mesh_stats: triangle index out of range");
      const int a = t[i], b = t[(i + 1) % 3];
      if (a == b) s.has_degenerate = true;
      const std::uint64_t key = (std::uint64_t(std::min(a, b)) << 32) | std::uint64_t(std::max(a, b));
      ++edge_use[key];
    }
  }
  s.edges = edge_use.size();
  s.watertight = !edge_use.empty() &&
                 std::all_of(edge_use.begin(), edge_use.end(), [](const auto& kv) { return kv.second == 2; });
  return s;
}

namespace {
Point3 sub(const Point3& a, const Point3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Point3 cross(const Point3& a, const Point3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Point3& a, const Point3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
}  // namespace

double mesh_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    const auto c = cross(sub(mesh.vertices[t[1]], mesh.vertices[t[0]]), sub(mesh.vertices[t[2]], mesh.vertices[t[0]]));
    area += 0.5 * std::sqrt(dot(c, c));
  }
  return area;
}

double mesh_signed_volume(const TriangleMesh& mesh) {
  double vol = 0.0;
  for (const auto& t : mesh.triangles)
    vol += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]])) / 6.0;
  return vol;
}

std::vector<std::size_t> farthest_point_sampling_indices(std::span<const Point3> candidates, std::size_t k,
                                                         std::uint64_t seed) {
  if (candidates.empty()) throw GeometryError("farthest_point_sampling: empty candidate list");
  if (k == 0) throw ContractError("farthest_point_sampling: k must be at least 1");
  const std::size_t n = candidates.size();
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  out.push_back(pick);
  min_d2[pick] = -1.0;
  const std::size_t greedy = std::min(k, n);
  while (out.size() < greedy) {
    pick = kernels::fps_update_argmax(candidates, candidates[pick], min_d2);
    min_d2[pick] = -1.0;
    out.push_back(pick);
  }
  while (out.size() < k) out.push_back(rng.index(n));
  return out;
}

std::vector<Point3> farthest_point_sampling(std::span<const Point3> candidates, std::size_t k, std::uint64_t seed) {
  const auto idx = farthest_point_sampling_indices(candidates, k, seed);
  std::vector<Point3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(candidates[i]);
  return out;
}

PointSet normalize(std::span<const Point3> voxel_points, Dims d) {
  PointSet p;
  p.points.reserve(voxel_points.size());
  for (const auto& v : voxel_points) p.points.push_back({v[0] / d.d, v[1] / d.h, v[2] / d.w});
  return p;
}

std::vector<Point3> denormalize(const PointSet& p, Dims d) {
  std::vector<Point3> out;
  out.reserve(p.size());
  for (const auto& v : p.points) out.push_back({v[0] * d.d, v[1] * d.h, v[2] * d.w});
  return out;
}

PointSet gt_points(const MaskVolume& mask, std::size_t n_points, std::uint64_t seed) {
  const auto mesh = marching_cubes(mask, 0.5);
  const auto picked = farthest_point_sampling(mesh.vertices, n_points, seed);
  return normalize(picked, mask.dims);
}

PointSet perturb_points(const PointSet& p, double range, std::uint64_t seed) {
  if (!(range >= 0.0)) throw ConfigError("perturb_points: range must be non-negative");
  Rng rng(seed);
  PointSet out = p;
  for (auto& pt : out.points)
    for (double& c : pt) c = std::clamp(c + rng.uniform(-range, range), 0.0, 1.0);
  return out;
}

void write_ply(const std::filesystem::path& file, const PointSet& p, Dims d) {
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\nelement vertex " << p.size()
     << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  char buf[96];
  for (const auto& v : p.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", v[2] * d.w, v[1] * d.h, v[0] * d.d);
    os << buf;
  }
  io::atomic_write(file, os.str());
}

void write_csv(const std::filesystem::path& file, const PointSet& p) {
  std::ostringstream os;
  os << "z,y,x\n";
  char buf[96];
  for (const auto& v : p.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", v[0], v[1], v[2]);
    os << buf;
  }
  io::atomic_write(file, os.str());
}

PointSet read_csv(const std::filesystem::path& file) {
  std::istringstream in(io::read_file(file));
  std::string line;
  if (!std::getline(in, line) || line != "z,y,x")
    throw FormatError("'" + file.string() + "': header must be 'z,y,x'");
  PointSet p;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    Point3 v{};
    char* end = nullptr;
    const char* s = line.c_str();
    for (int i = 0; i < 3; ++i) {
      v[i] = std::strtod(s, &end);
      if (end == s || (i < 2 && *end != ',') || (i == 2 && *end != '\0'))
        throw FormatError("'" + file.string() + "': malformed row " + std::to_string(row));
      s = end + 1;
    }
    p.points.push_back(v);
  }
  return p;
}

std::size_t read_ply_vertex_count(const std::filesystem::path& file) {
  std::istringstream in(io::read_file(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex ", 0) == 0) return std::stoul(line.substr(15));
    if (line == "end_header") break;
  }
  throw FormatError("'" + file.string() + "': no vertex element in PLY header");
}

}  // namespace shapepoint::surface
