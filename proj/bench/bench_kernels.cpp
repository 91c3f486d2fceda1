// Serial reference vs OpenMP kernels: wall time and maximum deviation.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "shapepoint/kernels.hpp"
#include "shapepoint/rng.hpp"

using namespace shapepoint;

namespace {

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, double max_dev) {
  std::printf("%-34s %10.4f %10.4f %8.2fx  max|diff| %.3g\n", name, serial, parallel, serial / parallel, max_dev);
}

template <typename T>
double max_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isinf(a[i]) && std::isinf(b[i])) continue;
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial[s]", "omp[s]", "speedup");
  Rng rng(42);

  for (auto [cin, cout, n] : {std::tuple{8, 8, 32}, std::tuple{16, 16, 16}, std::tuple{24, 8, 32}}) {
    kernels::ConvGeom g{cin, cout, 3, {n, n, n}};
    const std::size_t v = g.dims.voxels();
    std::vector<float> x(v * cin), w(static_cast<std::size_t>(cout) * cin * 27), b(cout), dy(v * cout);
    for (auto& e : x) e = static_cast<float>(rng.uniform(-1, 1));
    for (auto& e : w) e = static_cast<float>(rng.uniform(-0.2, 0.2));
    for (auto& e : dy) e = static_cast<float>(rng.uniform(-1, 1));
    std::vector<float> y0(v * cout), y1(v * cout);
    const double ts = best_of(2, [&] { kernels::serial::conv3d_forward<float>(g, x.data(), w.data(), b.data(), y0.data()); });
    const double tp = best_of(3, [&] { kernels::conv3d_forward<float>(g, x.data(), w.data(), b.data(), y1.data()); });
    char name[64];
    std::snprintf(name, sizeof name, "conv3d fwd %d->%d @%d^3", cin, cout, n);
    row(name, ts, tp, max_diff(y0, y1));

    std::vector<float> dx0(v * cin), dx1(v * cin), dw0(w.size()), dw1(w.size()), db0(cout), db1(cout);
    const double bs = best_of(1, [&] {
      std::fill(dw0.begin(), dw0.end(), 0.0f);
      std::fill(db0.begin(), db0.end(), 0.0f);
      kernels::serial::conv3d_backward<float>(g, x.data(), w.data(), dy.data(), dx0.data(), dw0.data(), db0.data());
    });
    const double bp = best_of(3, [&] {
      std::fill(dw1.begin(), dw1.end(), 0.0f);
      std::fill(db1.begin(), db1.end(), 0.0f);
      kernels::conv3d_backward<float>(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
    });
    std::snprintf(name, sizeof name, "conv3d bwd %d->%d @%d^3", cin, cout, n);
    row(name, bs, bp, std::max(max_diff(dx0, dx1), max_diff(dw0, dw1)));
  }

  {
    std::vector<Point3> a(4096), b(4096);
    for (auto& p : a) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (auto& p : b) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<std::size_t> i0(a.size()), i1(a.size());
    std::vector<double> d0(a.size()), d1(a.size());
    const double ts = best_of(2, [&] { kernels::serial::nearest_neighbors(a, b, i0, d0); });
    const double tp = best_of(3, [&] { kernels::nearest_neighbors(a, b, i1, d1); });
    row("nearest neighbours 4096x4096", ts, tp, max_diff(d0, d1) + (i0 == i1 ? 0.0 : 1.0));
  }

  {
    std::vector<Point3> c(20000);
    for (auto& p : c) p = {rng.uniform(0, 32), rng.uniform(0, 32), rng.uniform(0, 32)};
    auto run = [&](auto update) {
      std::vector<double> md(c.size(), 1e300);
      std::size_t pick = 0;
      md[pick] = -1.0;
      std::vector<std::size_t> seq{pick};
      for (int k = 1; k < 256; ++k) {
        pick = update(c, c[pick], md);
        md[pick] = -1.0;
        seq.push_back(pick);
      }
      return seq;
    };
    std::vector<std::size_t> s0, s1;
    const double ts = best_of(2, [&] {
      s0 = run([](auto& cc, const Point3& p, auto& md) { return kernels::serial::fps_update_argmax(cc, p, md); });
    });
    const double tp = best_of(3, [&] {
      s1 = run([](auto& cc, const Point3& p, auto& md) { return kernels::fps_update_argmax(cc, p, md); });
    });
    row("fps 256 of 20000", ts, tp, s0 == s1 ? 0.0 : 1.0);
  }

  {
    const Dims d{24, 24, 24};
    std::vector<std::uint8_t> seeds(d.voxels(), 0);
    for (int i = 0; i < 40; ++i) seeds[rng.index(seeds.size())] = 1;
    std::vector<double> e0, e1;
    const double ts = best_of(1, [&] { e0 = kernels::serial::squared_edt(seeds, d); });
    const double tp = best_of(3, [&] { e1 = kernels::squared_edt(seeds, d); });
    row("squared EDT 24^3, 40 seeds", ts, tp, max_diff(e0, e1));
  }
  return 0;
}
