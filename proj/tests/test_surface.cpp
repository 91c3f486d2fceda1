#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "shapepoint/errors.hpp"
#include "shapepoint/kernels.hpp"
#include "shapepoint/surface.hpp"
#include "test_util.hpp"

using namespace shapepoint;
using namespace shapepoint::surface;

TEST_CASE("sphere mesh is watertight with vertices near the radius") {
  const auto m = testutil::ball({32, 32, 32}, 15.5, 15.5, 15.5, 10.0);
  const auto mesh = marching_cubes(m);
  const auto st = mesh_stats(mesh);
  CHECK(st.watertight);
  CHECK_FALSE(st.has_degenerate);
  CHECK(st.euler_characteristic() == 2);
  for (const auto& v : mesh.vertices) {
    const double r = std::sqrt(oracle::dist2(v, {15.5, 15.5, 15.5}));
    CHECK(r >= 9.0);
    CHECK(r <= 11.0);
  }
  CHECK(mesh_signed_volume(mesh) > 0.0);
}

TEST_CASE("single voxel is a closed sphere-like surface") {
  MaskVolume m({5, 5, 5});
  m.at(2, 2, 2) = 1;
  const auto st = mesh_stats(marching_cubes(m));
  CHECK(st.watertight);
  CHECK(st.euler_characteristic() == 2);
}

TEST_CASE("diagonal voxels stay separate surfaces") {
  MaskVolume m({6, 6, 6});
  m.at(2, 2, 2) = 1;
  m.at(3, 3, 3) = 1;
  const auto st = mesh_stats(marching_cubes(m));
  CHECK(st.watertight);
  CHECK(st.euler_characteristic() == 4);
}

TEST_CASE("random masks give watertight meshes") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto m = testutil::random_mask(rng, {6, 7, 5}, 0.4);
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 5; ++x)
          if (z == 0 || y == 0 || x == 0 || z == 5 || y == 6 || x == 4) m.at(z, y, x) = 0;
    m.at(2, 3, 2) = 1;
    const auto st = mesh_stats(marching_cubes(m));
    CHECK(st.watertight);
  }
}

TEST_CASE("FPS matches the quadratic reference including ties") {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<Point3> c(n);
    // integer lattice coordinates make ties common
    for (auto& p : c) p = {double(rng.index(4)), double(rng.index(4)), double(rng.index(4))};
    const std::size_t k = 1 + rng.index(8);
    const std::uint64_t seed = rng.next();
    const auto got = farthest_point_sampling_indices(c, k, seed);
    const std::size_t first = Rng(seed).index(n);
    auto want = oracle::fps(c, k, first);
    REQUIRE(got.size() == k);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("FPS with k beyond the pool pads by resampling") {
  std::vector<Point3> c{{0, 0, 0}, {1, 1, 1}};
  const auto idx = farthest_point_sampling_indices(c, 5, 1);
  CHECK(idx.size() == 5);
  CHECK(idx[0] != idx[1]);
  CHECK_THROWS_AS(farthest_point_sampling_indices({}, 3, 1), GeometryError);
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(3);
  const auto a = testutil::random_points(rng, 300), b = testutil::random_points(rng, 200);
  std::vector<std::size_t> i0(300), i1(300);
  std::vector<double> d0(300), d1(300);
  kernels::serial::nearest_neighbors(a, b, i0, d0);
  kernels::nearest_neighbors(a, b, i1, d1);
  CHECK(i0 == i1);
  CHECK(d0 == d1);

  const Dims d{9, 8, 7};
  std::vector<std::uint8_t> seeds(d.voxels(), 0);
  for (int i = 0; i < 6; ++i) seeds[rng.index(seeds.size())] = 1;
  CHECK(kernels::squared_edt(seeds, d) == kernels::serial::squared_edt(seeds, d));

  std::vector<double> m0(300, 1e300), m1(300, 1e300);
  CHECK(kernels::fps_update_argmax(a, a[7], m0) == kernels::serial::fps_update_argmax(a, a[7], m1));
  CHECK(m0 == m1);

  kernels::ConvGeom g{3, 4, 3, {5, 6, 4}};
  const std::size_t v = g.dims.voxels();
  std::vector<double> x(v * 3), w(4 * 3 * 27), bias(4), dy(v * 4);
  for (auto* vec : {&x, &w, &bias, &dy})
    for (auto& e : *vec) e = rng.uniform(-1, 1);
  std::vector<double> y0(v * 4), y1(v * 4);
  kernels::serial::conv3d_forward<double>(g, x.data(), w.data(), bias.data(), y0.data());
  kernels::conv3d_forward<double>(g, x.data(), w.data(), bias.data(), y1.data());
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y0[i] == doctest::Approx(y1[i]).epsilon(1e-12));
  std::vector<double> dx0(v * 3), dx1(v * 3), dw0(w.size()), dw1(w.size()), db0(4), db1(4);
  kernels::serial::conv3d_backward<double>(g, x.data(), w.data(), dy.data(), dx0.data(), dw0.data(), db0.data());
  kernels::conv3d_backward<double>(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
  for (std::size_t i = 0; i < dx0.size(); ++i) CHECK(dx0[i] == doctest::Approx(dx1[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < dw0.size(); ++i) CHECK(dw0[i] == doctest::Approx(dw1[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < 4; ++i) CHECK(db0[i] == doctest::Approx(db1[i]).epsilon(1e-12));
}

TEST_CASE("ground-truth points") {
  const auto m = testutil::ball({32, 32, 32}, 15.5, 15.5, 15.5, 9.0);
  const auto p = gt_points(m, 128, 4);
  CHECK(p.size() == 128);
  CHECK_NOTHROW(p.validate(128));
  const auto q = gt_points(m, 128, 4);
  CHECK(p.points == q.points);
  // all points lie near the surface
  for (const auto& v : denormalize(p, m.dims)) {
    const double r = std::sqrt(oracle::dist2(v, {15.5, 15.5, 15.5}));
    CHECK(r > 8.0);
    CHECK(r < 10.0);
  }
  CHECK_THROWS_AS(gt_points(MaskVolume({8, 8, 8}), 16, 0), GeometryError);
}

TEST_CASE("perturbation stays within range and inside the unit cube") {
  Rng rng(2);
  auto p = testutil::random_set(rng, 200);
  p.points[0] = {0.0, 1.0, 0.001};
  const auto q = perturb_points(p, 0.005, 9);
  CHECK_NOTHROW(q.validate(200));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(std::abs(q.points[i][a] - p.points[i][a]) <= 0.005 + 1e-15);
  CHECK(perturb_points(p, 0.005, 9).points == q.points);
}

TEST_CASE("point files") {
  testutil::TempDir tmp;
  Rng rng(1);
  const auto p = testutil::random_set(rng, 37);
  write_csv(tmp.path / "p.csv", p);
  const auto r = read_csv(tmp.path / "p.csv");
  REQUIRE(r.size() == 37);
  for (std::size_t i = 0; i < 37; ++i)
    for (int a = 0; a < 3; ++a) CHECK(r.points[i][a] == p.points[i][a]);
  write_ply(tmp.path / "p.ply", p, {32, 32, 32});
  CHECK(read_ply_vertex_count(tmp.path / "p.ply") == 37);
  PointSet bad{{{0.5, 1.5, 0.2}}};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  CHECK_THROWS_AS(p.validate(36), ContractError);
}
