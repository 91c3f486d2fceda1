#include "shapepoint/synthvol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/io.hpp"
#include "shapepoint/rng.hpp"
#include "shapepoint/surface.hpp"

namespace shapepoint {

std::string Dims::str() const {
  return "(" + std::to_string(d) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

void VoxelVolume::validate() const {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) throw ShapeError("volume dims must be positive, got " + dims.str());
  if (data.size() != dims.voxels())
    throw ShapeError("volume has " + std::to_string(data.size()) + " values for dims " + dims.str());
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) throw ShapeError("volume spacing must be positive and finite");
  for (float v : data)
    if (!std::isfinite(v)) throw ShapeError("volume contains a non-finite value");
}

std::size_t MaskVolume::foreground_count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void MaskVolume::validate() const {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) throw ShapeError("mask dims must be positive, got " + dims.str());
  if (data.size() != dims.voxels())
    throw ShapeError("mask has " + std::to_string(data.size()) + " values for dims " + dims.str());
  for (auto v : data)
    if (v > 1) throw ShapeError("mask contains a value other than 0 or 1");
}

namespace {

// Labels 6-connected components; returns per-voxel label (0 = background)
// and the component sizes indexed by label - 1, labels assigned in scan order.
std::pair<std::vector<int>, std::vector<std::size_t>> label_components(const MaskVolume& m) {
  const Dims d = m.dims;
  std::vector<int> label(d.voxels(), 0);
  std::vector<std::size_t> sizes;
  std::queue<std::array<int, 3>> q;
  constexpr int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        const auto i = d.index(z, y, x);
        if (!m.data[i] || label[i]) continue;
        const int id = static_cast<int>(sizes.size()) + 1;
        std::size_t count = 0;
        label[i] = id;
        q.push({z, y, x});
        while (!q.empty()) {
          const auto [cz, cy, cx] = q.front();
          q.pop();
          ++count;
          for (const auto& o : nb) {
            const int nz = cz + o[0], ny = cy + o[1], nx = cx + o[2];
            if (!d.contains(nz, ny, nx)) continue;
            const auto j = d.index(nz, ny, nx);
            if (m.data[j] && !label[j]) {
              label[j] = id;
              q.push({nz, ny, nx});
            }
          }
        }
        sizes.push_back(count);
      }
  return {std::move(label), std::move(sizes)};
}

}  // namespace

int count_components(const MaskVolume& mask) {
  return static_cast<int>(label_components(mask).second.size());
}

MaskVolume largest_component(const MaskVolume& mask) {
  auto [label, sizes] = label_components(mask);
  MaskVolume out(mask.dims);
  if (sizes.empty()) return out;
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()) + 1;
  for (std::size_t i = 0; i < label.size(); ++i) out.data[i] = label[i] == keep;
  return out;
}

}  // namespace shapepoint

namespace shapepoint::synthvol {

using nlohmann::json;

std::string to_string(Preset p) { return p == Preset::kSimple ? "simple" : "complex"; }

Preset preset_from_string(const std::string& s) {
  if (s == "simple") return Preset::kSimple;
  if (s == "complex") return Preset::kComplex;
  throw ConfigError("preset: expected 'simple' or 'complex', got '" + s + "'");
}

SynthConfig SynthConfig::make(Preset preset, Dims dims, std::uint64_t seed) {
  SynthConfig c;
  c.preset = preset;
  c.dims = dims;
  c.seed = seed;
  if (preset == Preset::kComplex) {
    c.lobe_min = 2;
    c.lobe_max = 5;
    c.deformation = 0.22;
    c.exponent_min = 1.6;
    c.exponent_max = 3.0;
  }
  return c;
}

void SynthConfig::validate() const {
  if (dims.d < 16 || dims.h < 16 || dims.w < 16) throw ConfigError("dims: every axis must be >= 16, got " + dims.str());
  if (!(deformation >= 0.0)) throw ConfigError("deformation: must be >= 0");
  if (lobe_min < 0) throw ConfigError("lobe_min: must be >= 0");
  if (lobe_max < lobe_min) throw ConfigError("lobe_max: must be >= lobe_min");
  if (!(noise >= 0.0)) throw ConfigError("noise: must be >= 0");
  if (!(contrast > 0.0)) throw ConfigError("contrast: must be > 0");
  if (radius_min < 0.0 || radius_max < radius_min) throw ConfigError("radius_min/radius_max: need 0 <= min <= max");
  if (!(exponent_min > 0.5) || exponent_max < exponent_min)
    throw ConfigError("exponent_min/exponent_max: need 0.5 < min <= max");
  if (!(center_jitter >= 0.0)) throw ConfigError("center_jitter: must be >= 0");
}

std::uint64_t case_seed(std::uint64_t master_seed, std::uint64_t index) {
  return derive_seed(master_seed, Stream::kSynthCase, index);
}

namespace {

using Vec = std::array<double, 3>;

Vec random_unit(Rng& rng) {
  while (true) {
    Vec v{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-9) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

// Smooth band-limited function on the unit sphere with |g| <= 1.
struct SphereHarmonics {
  struct Term {
    Vec dir;
    double freq, phase, weight;
  };
  std::vector<Term> terms;

  SphereHarmonics(Rng& rng, int count) {
    double total = 0.0;
    for (int k = 0; k < count; ++k) {
      Term t{random_unit(rng), rng.uniform(1.5, 3.5), rng.uniform(0.0, 2.0 * std::numbers::pi),
             rng.uniform(0.3, 1.0)};
      total += t.weight;
      terms.push_back(t);
    }
    for (auto& t : terms) t.weight /= total;
  }

  double operator()(const Vec& u) const {
    double g = 0.0;
    for (const auto& t : terms)
      g += t.weight * std::sin(t.freq * (t.dir[0] * u[0] + t.dir[1] * u[1] + t.dir[2] * u[2]) + t.phase);
    return g;
  }
};

double super_norm(const Vec& q, double e) {
  return std::pow(std::pow(std::abs(q[0]), e) + std::pow(std::abs(q[1]), e) + std::pow(std::abs(q[2]), e),
                  1.0 / e);
}

struct Lobe {
  Vec center;
  double radius;
  SphereHarmonics shape;
};

MaskVolume build_mask(const SynthConfig& cfg, Rng& rng) {
  const Dims d = cfg.dims;
  const double jitter = cfg.center_jitter;
  Vec center{};
  double reach = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double mid = (d.axis(a) - 1) / 2.0;
    center[a] = mid + rng.uniform(-jitter, jitter);
    reach = std::min(reach, mid - kShapeMargin - jitter);
  }
  const double lobe_extent = cfg.lobe_max > 0 ? 1.25 : 1.0;
  const double spread = (1.0 + cfg.deformation) * lobe_extent;
  const double rmin = cfg.radius_max > 0.0 ? cfg.radius_min : 0.6 * reach / spread;
  const double rmax = cfg.radius_max > 0.0 ? cfg.radius_max : 0.85 * reach / spread;
  if (rmax * (1.0 + cfg.deformation) > reach + 1e-9 || rmax < 2.0)
    throw ConfigError("dims: " + d.str() + " too small to keep a " + std::to_string(kShapeMargin) +
                      "-voxel margin around the shape");

  const Vec axes{rng.uniform(rmin, rmax), rng.uniform(rmin, rmax), rng.uniform(rmin, rmax)};
  const double expo = rng.uniform(cfg.exponent_min, cfg.exponent_max);
  const SphereHarmonics base_shape(rng, 6);

  std::vector<Lobe> lobes;
  const int n_lobes = cfg.lobe_min + static_cast<int>(rng.index(cfg.lobe_max - cfg.lobe_min + 1));
  const double min_axis = std::min({axes[0], axes[1], axes[2]});
  for (int l = 0; l < n_lobes; ++l) {
    const Vec n = random_unit(rng);
    const double rho = super_norm(n, expo);
    Vec c{};
    for (int a = 0; a < 3; ++a) c[a] = center[a] + 0.6 * axes[a] * n[a] / rho;
    const double r = rng.uniform(0.3, 0.45) * min_axis;
    lobes.push_back({c, r, SphereHarmonics(rng, 4)});
  }

  MaskVolume mask(d);
  for (int z = kShapeMargin; z < d.d - kShapeMargin; ++z)
    for (int y = kShapeMargin; y < d.h - kShapeMargin; ++y)
      for (int x = kShapeMargin; x < d.w - kShapeMargin; ++x) {
        const Vec p{double(z), double(y), double(x)};
        const Vec q{(p[0] - center[0]) / axes[0], (p[1] - center[1]) / axes[1], (p[2] - center[2]) / axes[2]};
        const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
        bool in = qn == 0.0;
        if (!in) {
          const Vec u{q[0] / qn, q[1] / qn, q[2] / qn};
          in = super_norm(q, expo) <= 1.0 + cfg.deformation * base_shape(u);
        }
        for (std::size_t l = 0; !in && l < lobes.size(); ++l) {
          const Vec r{p[0] - lobes[l].center[0], p[1] - lobes[l].center[1], p[2] - lobes[l].center[2]};
          const double rn = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
          if (rn == 0.0) {
            in = true;
            break;
          }
          const Vec u{r[0] / rn, r[1] / rn, r[2] / rn};
          in = rn <= lobes[l].radius * (1.0 + 0.5 * cfg.deformation * lobes[l].shape(u));
        }
        mask.at(z, y, x) = in;
      }
  return largest_component(mask);
}

VoxelVolume build_volume(const SynthConfig& cfg, const MaskVolume& mask, Rng& rng) {
  const Dims d = cfg.dims;
  VoxelVolume v(d);
  const Vec k = random_unit(rng);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double scale = 2.0 * std::numbers::pi / std::max({d.d, d.h, d.w});
  const double sigma = cfg.noise * cfg.contrast;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        const double bias = 0.1 * cfg.contrast * std::sin(scale * (k[0] * z + k[1] * y + k[2] * x) + phase);
        const double noise = std::clamp(rng.normal(), -4.0, 4.0) * sigma;
        v.at(z, y, x) = static_cast<float>((mask.at(z, y, x) ? cfg.contrast : 0.0) + bias + noise);
      }
  return v;
}

}  // namespace

GeneratedCase generate_case(const SynthConfig& config, std::uint64_t case_seed) {
  config.validate();
  constexpr int kMaxAttempts = 8;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed =
        attempt == 0 ? case_seed : derive_seed(case_seed, Stream::kRegenerate, static_cast<std::uint64_t>(attempt));
    Rng rng(seed);
    MaskVolume mask = build_mask(config, rng);
    if (mask.foreground_count() == 0) continue;
    GeneratedCase out;
    out.volume = build_volume(config, mask, rng);
    out.mask = std::move(mask);
    out.effective_seed = seed;
    out.regenerations = attempt;
    return out;
  }
  throw InternalError("generate_case: empty mask after " + std::to_string(kMaxAttempts) + " attempts");
}

PaddedCase pad_volume(const VoxelVolume& v, const MaskVolume& m, int margin) {
  if (margin < 0) throw ConfigError("pad_volume: margin must be >= 0");
  if (!(v.dims == m.dims)) throw ShapeError("pad_volume: volume and mask dims differ");
  double bg_sum = 0.0;
  std::size_t bg_n = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i)
    if (!m.data[i]) {
      bg_sum += v.data[i];
      ++bg_n;
    }
  const float background = bg_n ? static_cast<float>(bg_sum / bg_n) : 0.0f;
  const Dims in = v.dims;
  const Dims out{in.d + 2 * margin, in.h + 2 * margin, in.w + 2 * margin};
  PaddedCase r{VoxelVolume(out, background), MaskVolume(out, 0)};
  r.volume.spacing = v.spacing;
  for (int z = 0; z < in.d; ++z)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        r.volume.at(z + margin, y + margin, x + margin) = v.at(z, y, x);
        r.mask.at(z + margin, y + margin, x + margin) = m.at(z, y, x);
      }
  return r;
}

double sphericity(const MaskVolume& mask) {
  const auto mesh = surface::marching_cubes(mask, 0.5);
  const double v = static_cast<double>(mask.foreground_count());
  return std::cbrt(std::numbers::pi) * std::pow(6.0 * v, 2.0 / 3.0) / surface::mesh_area(mesh);
}

// -- manifest ---------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ConfigError("split: expected train, validation or test, got '" + s + "'");
}

std::vector<const ManifestEntry*> DatasetManifest::in_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& c : cases)
    if (c.split == s) out.push_back(&c);
  return out;
}

std::size_t DatasetManifest::count(Split s) const { return in_split(s).size(); }

DatasetManifest split_dataset(const std::vector<std::string>& case_ids, std::array<double, 3> ratios,
                              std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw ConfigError("ratios: every ratio must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("ratios: must sum to 1");
  const std::size_t n = case_ids.size();
  if (n < 4) throw ConfigError("cases: need at least 4 cases for non-empty splits, got " + std::to_string(n));
  const auto n_val = static_cast<std::size_t>(std::llround(n * ratios[1]));
  const auto n_test = static_cast<std::size_t>(std::llround(n * ratios[2]));
  if (n_test == 0) throw ConfigError("cases: too few cases for a non-empty test split");
  if (n_val == 0) throw ConfigError("cases: too few cases for a non-empty validation split");
  if (n_val + n_test >= n) throw ConfigError("cases: too few cases for a non-empty train split");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, Stream::kSplit));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

  DatasetManifest m;
  m.ratios = ratios;
  m.split_seed = seed;
  m.cases.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.cases[i].id = case_ids[i];
    m.cases[i].path = "case_" + case_ids[i];
  }
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t r = 0; r < n; ++r)
    m.cases[order[r]].split = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kValidation : Split::kTest);
  return m;
}

void store_manifest(const std::filesystem::path& file, const DatasetManifest& m) {
  json j;
  j["ratios"] = m.ratios;
  j["split_seed"] = m.split_seed;
  j["config"] = m.config_json.empty() ? json(nullptr) : json::parse(m.config_json);
  j["cases"] = json::array();
  for (const auto& c : m.cases) j["cases"].push_back({{"id", c.id}, {"path", c.path}, {"split", to_string(c.split)}});
  io::atomic_write(file, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(io::read_file(file));
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + file.string() + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.ratios = j.at("ratios").get<std::array<double, 3>>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    if (j.contains("config") && !j["config"].is_null()) m.config_json = j["config"].dump();
    for (const auto& c : j.at("cases"))
      m.cases.push_back({c.at("id").get<std::string>(), c.at("path").get<std::string>(),
                         split_from_string(c.at("split").get<std::string>())});
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + file.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("manifest '" + file.string() + "': " + e.what());
  }
  return m;
}

// -- case container ---------------------------------------------------------------

void store_case(const std::filesystem::path& dir, const VoxelVolume& v, const MaskVolume& m, const CaseMeta& meta) {
  v.validate();
  m.validate();
  if (!(v.dims == m.dims)) throw ShapeError("store_case: volume and mask dims differ");
  namespace fs = std::filesystem;
  auto tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  std::string vol_bytes, mask_bytes;
  io::append_le(vol_bytes, v.data.data(), v.data.size());
  mask_bytes.assign(m.data.begin(), m.data.end());
  json j;
  j["dims"] = {v.dims.d, v.dims.h, v.dims.w};
  j["spacing"] = v.spacing;
  j["dtype"] = "f32";
  j["mask_dtype"] = "u8";
  j["seed"] = meta.seed;
  j["preset"] = meta.preset;
  io::atomic_write(tmp / "volume.raw", vol_bytes);
  io::atomic_write(tmp / "mask.raw", mask_bytes);
  io::atomic_write(tmp / "meta.json", j.dump(2) + "\n");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

LoadedCase load_case(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(io::read_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw FormatError("meta.json: corrupt header: " + std::string(e.what()));
  }
  auto field = [&](const char* name) -> const json& {
    if (!j.contains(name)) throw FormatError(std::string("meta.json: missing field '") + name + "'");
    return j[name];
  };
  LoadedCase c;
  try {
    const auto dims = field("dims").get<std::vector<long long>>();
    if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
      throw FormatError("meta.json: field 'dims' must hold three positive integers");
    c.volume.dims = {int(dims[0]), int(dims[1]), int(dims[2])};
    const auto sp = field("spacing").get<std::vector<double>>();
    if (sp.size() != 3) throw FormatError("meta.json: field 'spacing' must hold three values");
    c.volume.spacing = {sp[0], sp[1], sp[2]};
    if (field("dtype").get<std::string>() != "f32")
      throw FormatError("meta.json: field 'dtype' has unknown value '" + j["dtype"].get<std::string>() + "'");
    if (j.contains("mask_dtype") && j["mask_dtype"].get<std::string>() != "u8")
      throw FormatError("meta.json: field 'mask_dtype' has unknown value '" + j["mask_dtype"].get<std::string>() + "'");
    c.meta.seed = j.value("seed", std::uint64_t{0});
    c.meta.preset = j.value("preset", std::string{});
  } catch (const json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  const Dims d = c.volume.dims;
  const std::string vol_bytes = io::read_file(dir / "volume.raw");
  if (vol_bytes.size() != d.voxels() * sizeof(float))
    throw FormatError("volume.raw: payload holds " + std::to_string(vol_bytes.size() / sizeof(float)) +
                      " scalars (" + std::to_string(vol_bytes.size()) + " bytes), dims " + d.str() + " need " +
                      std::to_string(d.voxels()));
  c.volume.data = io::decode_le<float>(vol_bytes);
  const std::string mask_bytes = io::read_file(dir / "mask.raw");
  if (mask_bytes.size() != d.voxels())
    throw FormatError("mask.raw: payload holds " + std::to_string(mask_bytes.size()) + " scalars, dims " + d.str() +
                      " need " + std::to_string(d.voxels()));
  c.mask.dims = d;
  c.mask.data.assign(mask_bytes.begin(), mask_bytes.end());
  for (auto v : c.mask.data)
    if (v > 1) throw FormatError("mask.raw: value " + std::to_string(v) + " is not 0 or 1");
  try {
    c.volume.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("volume.raw: ") + e.what());
  }
  return c;
}

}  // namespace shapepoint::synthvol
