#pragma once

// Data-parallel inner loops. Every kernel in this namespace is OpenMP
// parallel with each output element owned by exactly one thread, so results
// do not depend on the thread count. `kernels::serial` holds straightforward
// reference versions used by the tests and the benchmark.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shapepoint/surface.hpp"
#include "shapepoint/volume.hpp"

namespace shapepoint::kernels {

// Stride-1 "same" convolution, kernel k in {1, 3}, zero padding k/2.
// Layouts: x [cin][D][H][W], w [cout][cin][k][k][k], y [cout][D][H][W].
struct ConvGeom {
  int cin = 0;
  int cout = 0;
  int k = 3;
  Dims dims;
};

template <typename T>
void conv3d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);

// Writes dx (if non-null) and accumulates into dw and db.
template <typename T>
void conv3d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

// Nearest neighbour in `to` for every point of `from` (lowest index on ties).
void nearest_neighbors(std::span<const Point3> from, std::span<const Point3> to,
                       std::span<std::size_t> index, std::span<double> dist2);

// One farthest-point-sampling round: min_d2[i] = min(min_d2[i], |c_i - pick|^2)
// for entries >= 0 (negative entries mark already selected candidates), then
// returns the arg max over unselected entries, lowest index on ties, or
// candidates.size() when none is left.
std::size_t fps_update_argmax(std::span<const Point3> candidates, const Point3& pick,
                              std::span<double> min_d2);

// Exact squared Euclidean distance transform (voxel units) to the nearest
// voxel with seeds[i] != 0; +inf everywhere when there is no seed.
std::vector<double> squared_edt(std::span<const std::uint8_t> seeds, Dims dims);

namespace serial {

template <typename T>
void conv3d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);

template <typename T>
void conv3d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

void nearest_neighbors(std::span<const Point3> from, std::span<const Point3> to,
                       std::span<std::size_t> index, std::span<double> dist2);

std::size_t fps_update_argmax(std::span<const Point3> candidates, const Point3& pick,
                              std::span<double> min_d2);

// Brute force over all seed voxels.
std::vector<double> squared_edt(std::span<const std::uint8_t> seeds, Dims dims);

}  // namespace serial

}  // namespace shapepoint::kernels
