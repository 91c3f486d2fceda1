#include "shapepoint/experiment.hpp"

#include <cinttypes>
#include <cstdlib>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/io.hpp"
#include "shapepoint/surface.hpp"

namespace shapepoint::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Dims dims_from_json(const json& v, const std::string& field) {
  if (v.is_number_integer()) {
    const int n = v.get<int>();
    return {n, n, n};
  }
  if (v.is_array() && v.size() == 3 && v[0].is_number_integer() && v[1].is_number_integer() &&
      v[2].is_number_integer())
    return {v[0].get<int>(), v[1].get<int>(), v[2].get<int>()};
  throw ConfigError(field + ": expected an integer or [D,H,W]");
}

template <typename T>
void read_field(const json& j, const std::string& prefix, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key + ": wrong type");
  }
}

}  // namespace

synthvol::SynthConfig synth_config_from_json(const std::string& text, synthvol::SynthConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known{"preset",      "dims",       "lobe_min",     "lobe_max",     "deformation",
                                           "noise",       "contrast",   "seed",         "radius_min",   "radius_max",
                                           "exponent_min", "exponent_max", "center_jitter", "cases",      "ratios"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("synth." + k + ": unknown field");
  // The preset supplies defaults for the shape fields, explicit keys override them.
  if (j.contains("preset") || j.contains("dims")) {
    const auto preset = j.contains("preset") ? synthvol::preset_from_string(j["preset"].get<std::string>()) : c.preset;
    const Dims dims = j.contains("dims") ? dims_from_json(j["dims"], "synth.dims") : c.dims;
    c = synthvol::SynthConfig::make(preset, dims, c.seed);
  }
  const std::string p = "synth.";
  read_field(j, p, "lobe_min", c.lobe_min);
  read_field(j, p, "lobe_max", c.lobe_max);
  read_field(j, p, "deformation", c.deformation);
  read_field(j, p, "noise", c.noise);
  read_field(j, p, "contrast", c.contrast);
  read_field(j, p, "seed", c.seed);
  read_field(j, p, "radius_min", c.radius_min);
  read_field(j, p, "radius_max", c.radius_max);
  read_field(j, p, "exponent_min", c.exponent_min);
  read_field(j, p, "exponent_max", c.exponent_max);
  read_field(j, p, "center_jitter", c.center_jitter);
  return c;
}

std::string synth_config_to_json(const synthvol::SynthConfig& c) {
  json j{{"preset", synthvol::to_string(c.preset)},
         {"dims", {c.dims.d, c.dims.h, c.dims.w}},
         {"lobe_min", c.lobe_min},
         {"lobe_max", c.lobe_max},
         {"deformation", c.deformation},
         {"noise", c.noise},
         {"contrast", c.contrast},
         {"seed", c.seed},
         {"radius_min", c.radius_min},
         {"radius_max", c.radius_max},
         {"exponent_min", c.exponent_min},
         {"exponent_max", c.exponent_max},
         {"center_jitter", c.center_jitter}};
  return j.dump();
}

void SynthPlan::validate() const {
  config.validate();
  if (cases < 4) throw ConfigError("cases: need at least 4 cases for non-empty splits, got " + std::to_string(cases));
  // Dry-run the split so that an empty split is reported before anything is written.
  std::vector<std::string> ids(static_cast<std::size_t>(cases), "x");
  synthvol::split_dataset(ids, ratios, config.seed);
}

fs::path synthesize(const SynthPlan& plan, const fs::path& out_dir) {
  plan.validate();
  std::vector<std::string> ids;
  char buf[16];
  for (int i = 0; i < plan.cases; ++i) {
    std::snprintf(buf, sizeof buf, "%04d", i);
    ids.emplace_back(buf);
  }
  auto manifest = synthvol::split_dataset(ids, plan.ratios, plan.config.seed);
  manifest.config_json = synth_config_to_json(plan.config);
  std::vector<synthvol::GeneratedCase> generated(ids.size());
  // Per-case seeds are independent, so the generation order cannot change results.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < plan.cases; ++i)
    generated[i] = synthvol::generate_case(plan.config, synthvol::case_seed(plan.config.seed, i));
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < ids.size(); ++i)
    synthvol::store_case(out_dir / manifest.cases[i].path, generated[i].volume, generated[i].mask,
                         {generated[i].effective_seed, synthvol::to_string(plan.config.preset)});
  const fs::path file = out_dir / "manifest.json";
  synthvol::store_manifest(file, manifest);
  return file;
}

void write_gt_points(const fs::path& manifest_path, int n_points, std::uint64_t seed) {
  if (n_points < 1) throw ConfigError("n_points: must be >= 1");
  const auto m = synthvol::load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  for (std::size_t i = 0; i < m.cases.size(); ++i) {
    const auto dir = root / m.cases[i].path;
    const auto c = synthvol::load_case(dir);
    const PointSet p = surface::gt_points(c.mask, static_cast<std::size_t>(n_points), trainer::gt_sampling_seed(seed, i));
    surface::write_csv(dir / "points_gt.csv", p);
    surface::write_ply(dir / "points_gt.ply", p, c.mask.dims);
  }
}

// -- spec -----------------------------------------------------------------------------------------

fs::path ExperimentSpec::run_dir(trainer::Mode m, std::uint64_t seed) const {
  return runs_dir / (trainer::to_string(m) + "_" + std::to_string(seed));
}

void ExperimentSpec::validate(bool require_data) const {
  synth.validate();
  train.validate();
  if (modes.empty()) throw ConfigError("modes: must list at least one mode");
  if (seeds.empty()) throw ConfigError("seeds: must list at least one seed");
  std::set<trainer::Mode> ms(modes.begin(), modes.end());
  if (ms.size() != modes.size()) throw ConfigError("modes: duplicate entry");
  std::set<std::uint64_t> ss(seeds.begin(), seeds.end());
  if (ss.size() != seeds.size()) throw ConfigError("seeds: duplicate entry");
  if (require_data && !fs::exists(manifest_path()))
    throw ConfigError("paths.data: no manifest at '" + manifest_path().string() + "' (run synth first)");
}

ExperimentSpec parse_spec(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("spec: expected an object");
  static const std::set<std::string> known{"synth", "train", "modes", "seeds", "paths"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("spec." + k + ": unknown field");

  ExperimentSpec s;
  if (j.contains("synth")) {
    const json& sj = j["synth"];
    if (!sj.is_object()) throw ConfigError("synth: expected an object");
    s.synth.config = synth_config_from_json(sj.dump(), s.synth.config);
    read_field(sj, "synth.", "cases", s.synth.cases);
    read_field(sj, "synth.", "ratios", s.synth.ratios);
  }
  if (j.contains("train")) {
    json tj = j["train"];
    if (!tj.is_object()) throw ConfigError("train: expected an object");
    if (tj.contains("mode")) throw ConfigError("train.mode: set the mode matrix through 'modes'");
    if (tj.contains("seed")) throw ConfigError("train.seed: set seeds through 'seeds'");
    s.train = trainer::TrainConfig::from_json(tj.dump());
  }
  if (j.contains("modes")) {
    if (!j["modes"].is_array()) throw ConfigError("modes: expected an array of strings");
    for (const auto& m : j["modes"]) {
      if (!m.is_string()) throw ConfigError("modes: expected an array of strings");
      s.modes.push_back(trainer::mode_from_string(m.get<std::string>()));
    }
  } else {
    s.modes = trainer::all_modes();
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ConfigError("seeds: expected an array of integers");
    for (const auto& v : j["seeds"]) {
      if (!v.is_number_unsigned()) throw ConfigError("seeds: expected an array of non-negative integers");
      s.seeds.push_back(v.get<std::uint64_t>());
    }
  } else {
    s.seeds = {1, 2, 3};
  }
  std::string data = "data", runs = "runs", reports = "reports";
  if (j.contains("paths")) {
    const json& pj = j["paths"];
    if (!pj.is_object()) throw ConfigError("paths: expected an object");
    for (const auto& [k, v] : pj.items())
      if (k != "data" && k != "runs" && k != "reports") throw ConfigError("paths." + k + ": unknown field");
    read_field(pj, "paths.", "data", data);
    read_field(pj, "paths.", "runs", runs);
    read_field(pj, "paths.", "reports", reports);
  }
  s.data_dir = base_dir / data;
  s.runs_dir = base_dir / runs;
  s.reports_dir = base_dir / reports;
  s.validate(false);
  return s;
}

ExperimentSpec load_spec(const fs::path& file) {
  std::string text;
  try {
    text = io::read_file(file);
  } catch (const FormatError&) {
    throw ConfigError("spec: cannot read '" + file.string() + "'");
  }
  return parse_spec(text, file.parent_path());
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SHAPEPOINT_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v, &end, 10);
  if (errno != 0 || *end != '\0' || v[0] == '-')
    throw ConfigError(std::string("SHAPEPOINT_SEED: not a non-negative integer: '") + v + "'");
  return static_cast<std::uint64_t>(x);
}

void apply_seed_override(ExperimentSpec& spec, std::uint64_t seed) {
  spec.synth.config.seed = seed;
  spec.seeds = {seed};
}

// -- harness --------------------------------------------------------------------------------------

void train_all(const ExperimentSpec& spec, const RunProgress& progress) {
  spec.validate(true);
  const auto data = trainer::load_dataset(spec.manifest_path(), spec.train.n_points, spec.train.gt_seed);
  for (trainer::Mode m : spec.modes)
    for (std::uint64_t seed : spec.seeds) {
      trainer::TrainConfig cfg = spec.train;
      cfg.mode = m;
      cfg.seed = seed;
      trainer::ProgressFn fn;
      if (progress) fn = [&](const trainer::EpochRecord& e) { progress(m, seed, e); };
      const auto r = trainer::train(data, cfg, fn);
      trainer::write_run(spec.run_dir(m, seed), r);
    }
}

void eval_all(const ExperimentSpec& spec) {
  spec.validate(true);
  const auto data = trainer::load_dataset(spec.manifest_path(), spec.train.n_points, spec.train.gt_seed);
  for (trainer::Mode m : spec.modes)
    for (std::uint64_t seed : spec.seeds) {
      const auto dir = spec.run_dir(m, seed);
      if (!fs::exists(dir / "checkpoint.bin"))
        throw ConfigError("missing checkpoint '" + (dir / "checkpoint.bin").string() + "' (run train first)");
      const auto rep = trainer::evaluate(checkpoint::load(dir / "checkpoint.bin"), data, synthvol::Split::kTest);
      io::atomic_write(dir / "metrics.json", rep.to_json());
      io::atomic_write(dir / "metrics.csv", rep.to_csv());
    }
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Decimal places per metric in the Markdown table.
const char* metric_format(const std::string& m) {
  if (m == "dice") return "%.3f";
  if (m == "hd" || m == "avgd") return "%.2f";
  return "%.4f";
}

}  // namespace

ComparisonTable compare_modes(const std::vector<trainer::Mode>& modes,
                              const std::vector<std::pair<trainer::Mode, shapemetrics::MetricsReport>>& pooled) {
  auto report_of = [&](trainer::Mode m) -> const shapemetrics::MetricsReport& {
    for (const auto& [mm, r] : pooled)
      if (mm == m) return r;
    throw HarnessError("no report for mode " + trainer::to_string(m));
  };
  ComparisonTable t;
  json j;
  j["modes"] = json::array();
  for (auto m : modes) j["modes"].push_back(trainer::to_string(m));
  j["metrics"] = json::object();
  j["p_values"] = json::array();

  std::ostringstream md;
  md << "| metric |";
  for (auto m : modes) md << ' ' << trainer::to_string(m) << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < modes.size(); ++i) md << "---|";
  md << '\n';

  const bool have_baseline = !modes.empty() && modes.front() == trainer::Mode::kSegOnly;
  for (const auto& metric : shapemetrics::metric_names()) {
    bool any = false;
    for (auto m : modes) any = any || report_of(m).aggregates.count(metric);
    if (!any) continue;
    const bool hib = shapemetrics::higher_is_better(metric);
    // Point metrics have no backbone-only value: mark the best mode instead.
    std::optional<double> base;
    if (have_baseline && report_of(modes.front()).aggregates.count(metric))
      base = report_of(modes.front()).aggregates.at(metric).mean;
    std::optional<double> best;
    for (auto m : modes)
      if (auto it = report_of(m).aggregates.find(metric); it != report_of(m).aggregates.end())
        if (!best || (hib ? it->second.mean > *best : it->second.mean < *best)) best = it->second.mean;

    md << "| " << metric << " |";
    for (auto m : modes) {
      const auto& agg = report_of(m).aggregates;
      auto it = agg.find(metric);
      if (it == agg.end()) {
        md << " - |";
        continue;
      }
      const auto& a = it->second;
      j["metrics"][metric][trainer::to_string(m)] = {{"mean", a.mean}, {"sd", a.sd}, {"n", a.n}};
      std::string cell = fmt(metric_format(metric), a.mean) + "±" + fmt(metric_format(metric), a.sd);
      bool bold = false;
      if (base && m != modes.front())
        bold = hib ? a.mean > *base : a.mean < *base;
      else if (!base)
        bold = a.mean == *best;
      bool sig = false;
      if (base && m != modes.front()) {
        try {
          const auto c = trainer::compare_runs(report_of(modes.front()), report_of(m), metric);
          sig = c.p_value < 0.05 && c.better == "b";
        } catch (const MetricError&) {
          // too few pairs for a test; listed as n/a below
        }
      }
      if (bold && sig)
        cell = "***" + cell + "***";
      else if (bold)
        cell = "**" + cell + "**";
      md << ' ' << cell << " |";
    }
    md << '\n';

    for (std::size_t a = 0; a < modes.size(); ++a)
      for (std::size_t b = a + 1; b < modes.size(); ++b) {
        const auto& ra = report_of(modes[a]);
        const auto& rb = report_of(modes[b]);
        if (!ra.aggregates.count(metric) || !rb.aggregates.count(metric)) continue;
        json row{{"baseline", trainer::to_string(modes[a])}, {"variant", trainer::to_string(modes[b])},
                 {"metric", metric}};
        try {
          const auto c = trainer::compare_runs(ra, rb, metric);
          row["p_value"] = c.p_value;
          row["n_pairs"] = c.n_pairs;
          row["better"] = c.better == "a" ? row["baseline"] : (c.better == "b" ? row["variant"] : json("tie"));
          row["significant"] = c.significant;
          t.rows.push_back(c);
        } catch (const MetricError& e) {
          row["p_value"] = nullptr;
          row["error"] = e.what();
          t.rows.push_back({metric, 1.0, 0, 0.0, 0.0, "tie", false});
        }
        j["p_values"].push_back(row);
      }
  }
  md << "\nValues are mean±sd over pooled test cases. Bold: the backbone-only column is outperformed "
        "(point metrics: best mode). Bold italic: additionally p < 0.05 (Wilcoxon signed-rank).\n\n";
  md << "| baseline | variant | metric | p | better |\n|---|---|---|---|---|\n";
  for (const auto& row : j["p_values"]) {
    md << "| " << row["baseline"].get<std::string>() << " | " << row["variant"].get<std::string>() << " | "
       << row["metric"].get<std::string>() << " | "
       << (row["p_value"].is_null() ? std::string("n/a") : fmt("%.4g", row["p_value"].get<double>())) << " | "
       << (row.contains("better") ? row["better"].get<std::string>() : std::string("-")) << " |\n";
  }
  t.markdown = md.str();
  t.json = j.dump(2) + "\n";
  return t;
}

ComparisonTable compare_all(const ExperimentSpec& spec) {
  spec.validate(false);
  std::vector<std::pair<trainer::Mode, shapemetrics::MetricsReport>> pooled;
  for (trainer::Mode m : spec.modes) {
    std::vector<std::pair<std::uint64_t, shapemetrics::MetricsReport>> runs;
    for (std::uint64_t seed : spec.seeds) {
      const auto file = spec.run_dir(m, seed) / "metrics.json";
      if (!fs::exists(file)) throw ConfigError("missing metrics '" + file.string() + "' (run train or eval first)");
      runs.emplace_back(seed, shapemetrics::MetricsReport::from_json(io::read_file(file)));
    }
    pooled.emplace_back(m, trainer::pool_reports(trainer::to_string(m), runs));
  }
  auto t = compare_modes(spec.modes, pooled);
  io::atomic_write(spec.reports_dir / "comparison.md", t.markdown);
  io::atomic_write(spec.reports_dir / "comparison.json", t.json);
  return t;
}

}  // namespace shapepoint::experiment
