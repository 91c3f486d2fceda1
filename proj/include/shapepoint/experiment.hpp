#pragma once

// Experiment specification and the mode-by-seed harness driven by the CLI.
//
// Spec file (JSON, paths relative to the spec file):
//   {
//     "synth": {"preset": "complex", "dims": [32,32,32], "cases": 40, "seed": 7,
//               "ratios": [0.5,0.25,0.25], ...SynthConfig overrides},
//     "train": {...TrainConfig without "mode" and "seed"},
//     "modes": ["seg_only", "seg+two_branch", "seg+pointnet", "seg+pointnet+al"],
//     "seeds": [1, 2, 3],
//     "paths": {"data": "data", "runs": "runs", "reports": "reports"}
//   }

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shapepoint/synthvol.hpp"
#include "shapepoint/trainer.hpp"

namespace shapepoint::experiment {

// SynthConfig <-> JSON. Unknown keys raise ConfigError naming the field.
synthvol::SynthConfig synth_config_from_json(const std::string& text, synthvol::SynthConfig base);
std::string synth_config_to_json(const synthvol::SynthConfig& c);

struct SynthPlan {
  synthvol::SynthConfig config;
  int cases = 40;
  std::array<double, 3> ratios{0.5, 0.25, 0.25};

  void validate() const;
};

// Generates the cases and manifest.json under out_dir; returns the manifest
// path. Re-running with the same plan rewrites identical bytes.
std::filesystem::path synthesize(const SynthPlan& plan, const std::filesystem::path& out_dir);

// Writes points_gt.csv and points_gt.ply into every case directory.
void write_gt_points(const std::filesystem::path& manifest_path, int n_points, std::uint64_t seed);

struct ExperimentSpec {
  SynthPlan synth;
  trainer::TrainConfig train;
  std::vector<trainer::Mode> modes;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path data_dir;
  std::filesystem::path runs_dir;
  std::filesystem::path reports_dir;

  std::filesystem::path manifest_path() const { return data_dir / "manifest.json"; }
  std::filesystem::path run_dir(trainer::Mode m, std::uint64_t seed) const;

  // Structural checks; with require_data also checks that the manifest exists.
  void validate(bool require_data) const;
};

ExperimentSpec parse_spec(const std::string& text, const std::filesystem::path& base_dir);
ExperimentSpec load_spec(const std::filesystem::path& file);

// SHAPEPOINT_SEED, when set, replaces the synthesis seed and the seeds list.
std::optional<std::uint64_t> env_seed();
void apply_seed_override(ExperimentSpec& spec, std::uint64_t seed);

using RunProgress = std::function<void(trainer::Mode, std::uint64_t, const trainer::EpochRecord&)>;

// Trains every (mode, seed) pair into runs/<mode>_<seed>/.
void train_all(const ExperimentSpec& spec, const RunProgress& progress = {});

// Re-evaluates every run checkpoint on the test split and rewrites metrics.json/csv.
void eval_all(const ExperimentSpec& spec);

struct ComparisonTable {
  std::string markdown;
  std::string json;
  std::vector<trainer::Comparison> rows;  // aligned with p_value entries in json
};

// Pools each mode's test reports over seeds and compares every ordered
// (baseline, variant) pair of modes on every metric both report.
ComparisonTable compare_modes(const std::vector<trainer::Mode>& modes,
                              const std::vector<std::pair<trainer::Mode, shapemetrics::MetricsReport>>& pooled);

// Loads runs/<mode>_<seed>/metrics.json for the spec and writes
// reports/comparison.md and reports/comparison.json.
ComparisonTable compare_all(const ExperimentSpec& spec);

}  // namespace shapepoint::experiment
