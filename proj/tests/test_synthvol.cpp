#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "shapepoint/errors.hpp"
#include "shapepoint/synthvol.hpp"
#include "test_util.hpp"

using namespace shapepoint;
using namespace shapepoint::synthvol;

namespace {

SynthConfig sphere_config() {
  auto c = SynthConfig::make(Preset::kSimple, {32, 32, 32}, 0);
  c.deformation = 0.0;
  c.radius_min = c.radius_max = 10.0;
  c.exponent_min = c.exponent_max = 2.0;
  c.center_jitter = 0.0;
  return c;
}

}  // namespace

TEST_CASE("sphere special case matches the analytic and voxel-centre volumes") {
  const auto g = generate_case(sphere_config(), 3);
  std::size_t inside = 0;
  for (int z = 0; z < 32; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const double dz = z - 15.5, dy = y - 15.5, dx = x - 15.5;
        inside += dz * dz + dy * dy + dx * dx <= 100.0;
      }
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 1000.0;
  const auto fg = static_cast<double>(g.mask.foreground_count());
  CHECK(std::abs(fg - analytic) / analytic < 0.05);
  CHECK(g.mask.foreground_count() == inside);
}

TEST_CASE("generation is deterministic and masks are single components") {
  for (auto preset : {Preset::kSimple, Preset::kComplex}) {
    const auto cfg = SynthConfig::make(preset, {32, 32, 32}, 11);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto a = generate_case(cfg, case_seed(11, s));
      const auto b = generate_case(cfg, case_seed(11, s));
      CHECK(a.volume.data == b.volume.data);
      CHECK(a.mask.data == b.mask.data);
      CHECK(count_components(a.mask) == 1);
      CHECK(a.mask.foreground_count() > 0);
      // margin on every face
      for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x)
            if (a.mask.at(z, y, x)) {
              CHECK(std::min({z, y, x}) >= kShapeMargin);
              CHECK(std::max({z, y, x}) < 32 - kShapeMargin);
            }
      a.volume.validate();
    }
  }
}

TEST_CASE("complex preset is less spherical than simple") {
  double simple = 0.0, complex = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    simple += sphericity(generate_case(SynthConfig::make(Preset::kSimple, {32, 32, 32}, 0), s).mask);
    complex += sphericity(generate_case(SynthConfig::make(Preset::kComplex, {32, 32, 32}, 0), s).mask);
  }
  CHECK(complex < simple);
}

TEST_CASE("config validation") {
  auto c = SynthConfig::make(Preset::kSimple, {8, 32, 32}, 0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig::make(Preset::kSimple, {32, 32, 32}, 0);
  c.deformation = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig::make(Preset::kSimple, {16, 16, 16}, 0);
  c.radius_min = c.radius_max = 10.0;
  CHECK_THROWS_AS(generate_case(c, 0), ConfigError);
  CHECK_THROWS_AS(preset_from_string("medium"), ConfigError);
}

TEST_CASE("padding") {
  const auto g = generate_case(SynthConfig::make(Preset::kSimple, {32, 32, 32}, 0), 5);
  const auto same = pad_volume(g.volume, g.mask, 0);
  CHECK(same.volume.data == g.volume.data);
  CHECK(same.mask.data == g.mask.data);
  const auto p = pad_volume(g.volume, g.mask, 20);
  CHECK(p.volume.dims == Dims{72, 72, 72});
  CHECK(p.mask.foreground_count() == g.mask.foreground_count());
  CHECK(p.mask.at(20 + 16, 20 + 16, 20 + 16) == g.mask.at(16, 16, 16));
  CHECK(p.volume.at(20 + 3, 20 + 7, 20 + 9) == g.volume.at(3, 7, 9));
  double bg = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.mask.data.size(); ++i)
    if (!g.mask.data[i]) {
      bg += g.volume.data[i];
      ++n;
    }
  CHECK(p.volume.at(0, 0, 0) == doctest::Approx(bg / n).epsilon(1e-6));
  CHECK_THROWS_AS(pad_volume(g.volume, g.mask, -1), ConfigError);
}

TEST_CASE("split counts, disjointness and determinism") {
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("c" + std::to_string(i));
    return v;
  };
  auto m = split_dataset(ids(40), {0.5, 0.25, 0.25}, 3);
  CHECK(m.count(Split::kTrain) == 20);
  CHECK(m.count(Split::kValidation) == 10);
  CHECK(m.count(Split::kTest) == 10);
  m = split_dataset(ids(4), {0.5, 0.25, 0.25}, 3);
  CHECK(m.count(Split::kTrain) == 2);
  CHECK(m.count(Split::kValidation) == 1);
  CHECK(m.count(Split::kTest) == 1);

  const auto a = split_dataset(ids(23), {0.5, 0.25, 0.25}, 9);
  const auto b = split_dataset(ids(23), {0.5, 0.25, 0.25}, 9);
  for (std::size_t i = 0; i < a.cases.size(); ++i) CHECK(a.cases[i].split == b.cases[i].split);

  for (int n = 4; n <= 30; ++n)
    for (auto r : {std::array{0.5, 0.25, 0.25}, std::array{0.6, 0.2, 0.2}, std::array{0.34, 0.33, 0.33}}) {
      const auto s = split_dataset(ids(n), r, n);
      std::set<std::string> seen;
      for (const auto& c : s.cases) seen.insert(c.id);
      CHECK(seen.size() == static_cast<std::size_t>(n));
      CHECK(s.count(Split::kTrain) + s.count(Split::kValidation) + s.count(Split::kTest) == static_cast<std::size_t>(n));
      CHECK(std::abs(double(s.count(Split::kValidation)) - r[1] * n) <= 1.0);
      CHECK(std::abs(double(s.count(Split::kTest)) - r[2] * n) <= 1.0);
    }
  CHECK_THROWS_AS(split_dataset(ids(3), {0.5, 0.25, 0.25}, 0), ConfigError);
}

TEST_CASE("case files round-trip and reject corrupt input") {
  testutil::TempDir tmp;
  const auto g = generate_case(SynthConfig::make(Preset::kComplex, {32, 32, 32}, 0), 8);
  const auto dir = tmp.path / "case";
  store_case(dir, g.volume, g.mask, {8, "complex"});
  const auto l = load_case(dir);
  CHECK(l.volume.data == g.volume.data);
  CHECK(l.mask.data == g.mask.data);
  CHECK(l.volume.dims == g.volume.dims);
  CHECK(l.meta.seed == 8);

  SUBCASE("truncated payload") {
    std::filesystem::resize_file(dir / "volume.raw", 100);
    CHECK_THROWS_AS(load_case(dir), FormatError);
  }
  SUBCASE("dims disagree with payload") {
    {
      std::ofstream(dir / "meta.json") << R"({"dims":[2,2,2],"spacing":[1,1,1],"dtype":"f32"})";
      std::ofstream out(dir / "volume.raw", std::ios::binary | std::ios::trunc);
      const float v[7] = {};
      out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
    CHECK_THROWS_WITH_AS(load_case(dir), doctest::Contains("volume.raw"), FormatError);
  }
  SUBCASE("unknown dtype") {
    std::ofstream(dir / "meta.json") << R"({"dims":[32,32,32],"spacing":[1,1,1],"dtype":"f64"})";
    CHECK_THROWS_WITH_AS(load_case(dir), doctest::Contains("dtype"), FormatError);
  }
  SUBCASE("corrupt header") {
    std::ofstream(dir / "meta.json") << "{not json";
    CHECK_THROWS_AS(load_case(dir), FormatError);
  }
}

TEST_CASE("manifest round-trip") {
  testutil::TempDir tmp;
  auto m = split_dataset({"a", "b", "c", "d", "e"}, {0.5, 0.25, 0.25}, 1);
  for (auto& c : m.cases) c.path = c.id;
  store_manifest(tmp.path / "manifest.json", m);
  const auto l = load_manifest(tmp.path / "manifest.json");
  REQUIRE(l.cases.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(l.cases[i].id == m.cases[i].id);
    CHECK(l.cases[i].split == m.cases[i].split);
  }
}
