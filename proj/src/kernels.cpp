#include "shapepoint/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shapepoint/errors.hpp"

namespace shapepoint::kernels {

namespace {

// Zero-padded frame used by the fast convolution. An output voxel (z,y,x)
// is anchored at o = z*plane + y*Wp + x, and the input sample for kernel tap
// (kz,ky,kx) sits at o + kz*plane + ky*Wp + kx, so every tap becomes one
// contiguous axpy over [0, span).
struct PaddedFrame {
  int pad, dp, hp, wp;
  std::size_t plane, volume, span;

  PaddedFrame(Dims d, int k) : pad(k / 2), dp(d.d + 2 * pad), hp(d.h + 2 * pad), wp(d.w + 2 * pad) {
    plane = static_cast<std::size_t>(hp) * wp;
    volume = plane * dp;
    span = static_cast<std::size_t>(d.d - 1) * plane + static_cast<std::size_t>(d.h - 1) * wp + d.w;
  }
  std::size_t anchor(int z, int y, int x) const { return z * plane + static_cast<std::size_t>(y) * wp + x; }
  std::size_t interior(int z, int y, int x) const { return anchor(z + pad, y + pad, x + pad); }
};

template <typename T>
std::vector<T> pad_channels(const T* x, int channels, Dims d, const PaddedFrame& f) {
  std::vector<T> out(static_cast<std::size_t>(channels) * f.volume, T(0));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * d.voxels();
    T* dst = out.data() + static_cast<std::size_t>(c) * f.volume;
    for (int z = 0; z < d.d; ++z)
      for (int y = 0; y < d.h; ++y)
        std::copy_n(src + d.index(z, y, 0), d.w, dst + f.interior(z, y, 0));
  }
  return out;
}

std::vector<std::size_t> tap_offsets(const PaddedFrame& f, int k) {
  std::vector<std::size_t> off;
  off.reserve(static_cast<std::size_t>(k) * k * k);
  for (int kz = 0; kz < k; ++kz)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) off.push_back(f.anchor(kz, ky, kx));
  return off;
}

constexpr std::size_t kChunk = 2048;

// y[co] = b[co] + sum_ci sum_t w[co][ci][t] * xpad[ci][o + off[t]]
template <typename T>
void forward_padded(const ConvGeom& g, const PaddedFrame& f, const T* xpad, const T* w, const T* b,
                    T* y) {
  const int taps = g.k * g.k * g.k;
  const auto off = tap_offsets(f, g.k);
  const Dims d = g.dims;
#pragma omp parallel
  {
    std::vector<T> acc(f.span);
#pragma omp for schedule(static)
    for (int co = 0; co < g.cout; ++co) {
      const T bias = b ? b[co] : T(0);
      for (std::size_t c0 = 0; c0 < f.span; c0 += kChunk) {
        const std::size_t n = std::min(kChunk, f.span - c0);
        T* a = acc.data() + c0;
        std::fill_n(a, n, bias);
        for (int ci = 0; ci < g.cin; ++ci) {
          const T* xin = xpad + static_cast<std::size_t>(ci) * f.volume + c0;
          const T* wk = w + (static_cast<std::size_t>(co) * g.cin + ci) * taps;
          for (int t = 0; t < taps; ++t) {
            const T wv = wk[t];
            const T* src = xin + off[t];
#pragma omp simd
            for (std::size_t o = 0; o < n; ++o) a[o] += wv * src[o];
          }
        }
      }
      T* out = y + static_cast<std::size_t>(co) * d.voxels();
      for (int z = 0; z < d.d; ++z)
        for (int yy = 0; yy < d.h; ++yy)
          std::copy_n(acc.data() + f.anchor(z, yy, 0), d.w, out + d.index(z, yy, 0));
    }
  }
}

}  // namespace

template <typename T>
void conv3d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
  if (g.k != 1 && g.k != 3) throw ShapeError("conv3d: kernel size must be 1 or 3");
  const PaddedFrame f(g.dims, g.k);
  const auto xpad = pad_channels(x, g.cin, g.dims, f);
  forward_padded(g, f, xpad.data(), w, b, y);
}

template <typename T>
void conv3d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  if (g.k != 1 && g.k != 3) throw ShapeError("conv3d: kernel size must be 1 or 3");
  const PaddedFrame f(g.dims, g.k);
  const Dims d = g.dims;
  const int taps = g.k * g.k * g.k;
  const std::size_t vox = d.voxels();

  // Input gradient: a same-padded convolution of dy with the spatially
  // flipped, channel-transposed kernel.
  if (dx) {
    std::vector<T> wt(static_cast<std::size_t>(g.cin) * g.cout * taps);
    for (int co = 0; co < g.cout; ++co)
      for (int ci = 0; ci < g.cin; ++ci)
        for (int t = 0; t < taps; ++t)
          wt[(static_cast<std::size_t>(ci) * g.cout + co) * taps + (taps - 1 - t)] =
              w[(static_cast<std::size_t>(co) * g.cin + ci) * taps + t];
    const ConvGeom gt{g.cout, g.cin, g.k, d};
    const auto dypad = pad_channels(dy, g.cout, d, f);
    forward_padded<T>(gt, f, dypad.data(), wt.data(), nullptr, dx);
  }

  // Weight gradient: dw[co][ci][t] += sum_o dyf[co][o] * xpad[ci][o + off[t]]
  // with dy scattered into the anchor frame (zeros at non-output anchors).
  const auto xpad = pad_channels(x, g.cin, d, f);
  const auto off = tap_offsets(f, g.k);
#pragma omp parallel
  {
    std::vector<T> dyf(f.span);
#pragma omp for schedule(static)
    for (int co = 0; co < g.cout; ++co) {
      std::fill(dyf.begin(), dyf.end(), T(0));
      const T* src = dy + static_cast<std::size_t>(co) * vox;
      T bsum = T(0);
      for (int z = 0; z < d.d; ++z)
        for (int yy = 0; yy < d.h; ++yy) {
          const T* row = src + d.index(z, yy, 0);
          std::copy_n(row, d.w, dyf.data() + f.anchor(z, yy, 0));
          for (int xx = 0; xx < d.w; ++xx) bsum += row[xx];
        }
      db[co] += bsum;
      for (int ci = 0; ci < g.cin; ++ci) {
        const T* xin = xpad.data() + static_cast<std::size_t>(ci) * f.volume;
        T* dwk = dw + (static_cast<std::size_t>(co) * g.cin + ci) * taps;
        for (int t = 0; t < taps; ++t) {
          const T* xs = xin + off[t];
          T s = T(0);
#pragma omp simd reduction(+ : s)
          for (std::size_t o = 0; o < f.span; ++o) s += dyf[o] * xs[o];
          dwk[t] += s;
        }
      }
    }
  }
}

void nearest_neighbors(std::span<const Point3> from, std::span<const Point3> to,
                       std::span<std::size_t> index, std::span<double> dist2) {
  const long n = static_cast<long>(from.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const Point3& p = from[i];
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double dz = p[0] - to[j][0], dy = p[1] - to[j][1], dx = p[2] - to[j][2];
      const double d2 = dz * dz + dy * dy + dx * dx;
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    index[i] = arg;
    dist2[i] = best;
  }
}

std::size_t fps_update_argmax(std::span<const Point3> c, const Point3& pick, std::span<double> min_d2) {
  const long n = static_cast<long>(c.size());
  std::size_t best_index = c.size();
  double best_value = -1.0;
#pragma omp parallel
  {
    std::size_t local_index = c.size();
    double local_value = -1.0;
#pragma omp for schedule(static) nowait
    for (long i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      const double dz = c[i][0] - pick[0], dy = c[i][1] - pick[1], dx = c[i][2] - pick[2];
      const double d2 = dz * dz + dy * dy + dx * dx;
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > local_value) {
        local_value = min_d2[i];
        local_index = static_cast<std::size_t>(i);
      }
    }
#pragma omp critical
    {
      if (local_index < c.size() &&
          (local_value > best_value || (local_value == best_value && local_index < best_index))) {
        best_value = local_value;
        best_index = local_index;
      }
    }
  }
  return best_index;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas along one line;
// +inf samples are not sites.
void edt_line(const double* f, double* out, int n, int* v, double* z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] = -inf stops this at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill_n(out, n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    out[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_edt(std::span<const std::uint8_t> seeds, Dims d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(d.voxels());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = seeds[i] ? 0.0 : inf;
  const int longest = std::max({d.d, d.h, d.w});

  // Pass along each axis in turn; lines are independent.
  for (int axis = 2; axis >= 0; --axis) {
    const int n = d.axis(axis);
    const int a1 = axis == 0 ? d.h : d.d;  // the two other extents
    const int a2 = axis == 2 ? d.h : d.w;
    const long lines = static_cast<long>(a1) * a2;
#pragma omp parallel
    {
      std::vector<double> f(longest), out(longest), z(longest + 1);
      std::vector<int> v(longest);
#pragma omp for schedule(static)
      for (long l = 0; l < lines; ++l) {
        const int i1 = static_cast<int>(l / a2), i2 = static_cast<int>(l % a2);
        auto at = [&](int q) -> double& {
          if (axis == 2) return g[d.index(i1, i2, q)];
          if (axis == 1) return g[d.index(i1, q, i2)];
          return g[d.index(q, i1, i2)];
        };
        for (int q = 0; q < n; ++q) f[q] = at(q);
        edt_line(f.data(), out.data(), n, v.data(), z.data());
        for (int q = 0; q < n; ++q) at(q) = out[q];
      }
    }
  }
  return g;
}

namespace serial {

template <typename T>
void conv3d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
  const Dims d = g.dims;
  const int p = g.k / 2, taps = g.k * g.k * g.k;
  for (int co = 0; co < g.cout; ++co)
    for (int z = 0; z < d.d; ++z)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          T s = b ? b[co] : T(0);
          for (int ci = 0; ci < g.cin; ++ci)
            for (int kz = 0; kz < g.k; ++kz)
              for (int ky = 0; ky < g.k; ++ky)
                for (int kx = 0; kx < g.k; ++kx) {
                  const int iz = z + kz - p, iy = yy + ky - p, ix = xx + kx - p;
                  if (!d.contains(iz, iy, ix)) continue;
                  s += w[(static_cast<std::size_t>(co) * g.cin + ci) * taps + (kz * g.k + ky) * g.k + kx] *
                       x[ci * d.voxels() + d.index(iz, iy, ix)];
                }
          y[co * d.voxels() + d.index(z, yy, xx)] = s;
        }
}

template <typename T>
void conv3d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const Dims d = g.dims;
  const int p = g.k / 2, taps = g.k * g.k * g.k;
  if (dx) std::fill_n(dx, static_cast<std::size_t>(g.cin) * d.voxels(), T(0));
  for (int co = 0; co < g.cout; ++co)
    for (int z = 0; z < d.d; ++z)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          const T gy = dy[co * d.voxels() + d.index(z, yy, xx)];
          db[co] += gy;
          for (int ci = 0; ci < g.cin; ++ci)
            for (int kz = 0; kz < g.k; ++kz)
              for (int ky = 0; ky < g.k; ++ky)
                for (int kx = 0; kx < g.k; ++kx) {
                  const int iz = z + kz - p, iy = yy + ky - p, ix = xx + kx - p;
                  if (!d.contains(iz, iy, ix)) continue;
                  const std::size_t wi =
                      (static_cast<std::size_t>(co) * g.cin + ci) * taps + (kz * g.k + ky) * g.k + kx;
                  const std::size_t xi = ci * d.voxels() + d.index(iz, iy, ix);
                  dw[wi] += gy * x[xi];
                  if (dx) dx[xi] += gy * w[wi];
                }
        }
}

void nearest_neighbors(std::span<const Point3> from, std::span<const Point3> to,
                       std::span<std::size_t> index, std::span<double> dist2) {
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double dz = from[i][0] - to[j][0], dy = from[i][1] - to[j][1], dx = from[i][2] - to[j][2];
      const double d2 = dz * dz + dy * dy + dx * dx;
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    index[i] = arg;
    dist2[i] = best;
  }
}

std::size_t fps_update_argmax(std::span<const Point3> c, const Point3& pick, std::span<double> min_d2) {
  std::size_t best_index = c.size();
  double best_value = -1.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (min_d2[i] < 0.0) continue;
    const double dz = c[i][0] - pick[0], dy = c[i][1] - pick[1], dx = c[i][2] - pick[2];
    min_d2[i] = std::min(min_d2[i], dz * dz + dy * dy + dx * dx);
    if (min_d2[i] > best_value) {
      best_value = min_d2[i];
      best_index = i;
    }
  }
  return best_index;
}

std::vector<double> squared_edt(std::span<const std::uint8_t> seeds, Dims d) {
  std::vector<std::array<int, 3>> sites;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        if (seeds[d.index(z, y, x)]) sites.push_back({z, y, x});
  std::vector<double> out(d.voxels(), std::numeric_limits<double>::infinity());
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : sites) {
          const double dz = z - s[0], dy = y - s[1], dx = x - s[2];
          best = std::min(best, dz * dz + dy * dy + dx * dx);
        }
        out[d.index(z, y, x)] = best;
      }
  return out;
}

template void conv3d_forward<float>(const ConvGeom&, const float*, const float*, const float*, float*);
template void conv3d_forward<double>(const ConvGeom&, const double*, const double*, const double*, double*);
template void conv3d_backward<float>(const ConvGeom&, const float*, const float*, const float*, float*,
                                     float*, float*);
template void conv3d_backward<double>(const ConvGeom&, const double*, const double*, const double*,
                                      double*, double*, double*);

}  // namespace serial

template void conv3d_forward<float>(const ConvGeom&, const float*, const float*, const float*, float*);
template void conv3d_forward<double>(const ConvGeom&, const double*, const double*, const double*, double*);
template void conv3d_backward<float>(const ConvGeom&, const float*, const float*, const float*, float*,
                                     float*, float*);
template void conv3d_backward<double>(const ConvGeom&, const double*, const double*, const double*, double*,
                                      double*, double*);

}  // namespace shapepoint::kernels
