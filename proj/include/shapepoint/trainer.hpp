#pragma once

// Joint optimization of the backbone, the point generator and the point-set
// classifier, checkpoint selection on validation Dice, and evaluation.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shapepoint/adversary.hpp"
#include "shapepoint/backbone.hpp"
#include "shapepoint/checkpoint.hpp"
#include "shapepoint/pointgen.hpp"
#include "shapepoint/shapemetrics.hpp"
#include "shapepoint/synthvol.hpp"

namespace shapepoint::trainer {

enum class Mode { kSegOnly, kSegTwoBranch, kSegPointNet, kSegPointNetAl };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
const std::vector<Mode>& all_modes();
bool uses_generator(Mode m);
bool uses_adversary(Mode m);

// Unit point-loss weights: at 100 the point terms swamp the segmentation
// gradient and Dice collapses on 32^3 volumes.
struct LossWeights {
  double seg = 1.0;
  double cd = 1.0;
  double emd = 1.0;
  double al = 1.0;
};

struct TrainConfig {
  double lr = 5e-4;
  int batch_size = 1;
  int max_epochs = 100;
  LossWeights weights;
  Mode mode = Mode::kSegPointNetAl;
  std::uint64_t seed = 0;
  int val_every = 1;
  int patience = 20;
  double noise_range = surface::kDefaultNoiseRange;
  int n_points = static_cast<int>(surface::kDefaultPoints);
  int base_channels = 8;
  backbone::SegLossKind seg_loss = backbone::SegLossKind::kBce;
  std::uint64_t gt_seed = 0;  // seeds ground-truth sampling when no points_gt.csv exists

  void validate() const;
  std::string to_json() const;
  // Unknown keys and wrongly typed values raise ConfigError naming the field.
  static TrainConfig from_json(const std::string& text);
};

// Seed used for a case's ground-truth farthest point sampling.
std::uint64_t gt_sampling_seed(std::uint64_t gt_seed, std::size_t case_index);

struct CaseData {
  std::string id;
  synthvol::Split split = synthvol::Split::kTrain;
  VoxelVolume volume;
  MaskVolume mask;
  PointSet gt;
  nn::Tensor<float> input;
  nn::Tensor<float> gt_tensor;
};

struct Dataset {
  std::filesystem::path manifest_path;
  synthvol::DatasetManifest manifest;
  std::vector<CaseData> cases;  // manifest order
  Dims dims;

  std::vector<const CaseData*> in_split(synthvol::Split s) const;
};

// Loads every case; ground truth comes from `points_gt.csv` when present with
// n_points rows, otherwise it is sampled with gt_sampling_seed.
Dataset load_dataset(const std::filesystem::path& manifest_path, int n_points, std::uint64_t gt_seed);

// Every network of the pipeline. All four modes hold the same components;
// the mode decides which are optimized. The generator is a two-branch
// baseline in seg+two_branch mode and the point-network otherwise.
class Model {
 public:
  Model(const TrainConfig& cfg, Dims dims);

  void init();
  const TrainConfig& config() const { return cfg_; }
  Dims dims() const { return dims_; }

  nn::ParamList<float> backbone_params();
  nn::ParamList<float> generator_params();
  nn::ParamList<float> classifier_params();
  nn::ParamList<float> all_params();

  std::string snapshot_json() const;  // {"train": ..., "dims": [...]}
  static std::unique_ptr<Model> from_archive(const checkpoint::Archive& a);

  backbone::UNet3D<float> unet;
  std::unique_ptr<pointgen::PointGenerator<float>> generator;
  adversary::PointClassifier<float> classifier;

 private:
  TrainConfig cfg_;
  Dims dims_;
};

struct StepLosses {
  double seg = 0.0;
  double cd = 0.0;
  double emd = 0.0;
  double al_g = 0.0;
  double al_d = 0.0;
  double total = 0.0;  // weighted sum of the active seg, cd, emd and al_g terms

  StepLosses& operator+=(const StepLosses& o);
  StepLosses scaled(double f) const;
};

// Owns the optimizers. One call = one optimizer step on a batch of cases.
class Trainer {
 public:
  explicit Trainer(Model& model);
  StepLosses step(std::span<const CaseData* const> batch);
  std::int64_t steps() const { return steps_; }

 private:
  Model& model_;
  nn::Adam<float> opt_g_;
  nn::Adam<float> opt_d_;
  std::int64_t steps_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 0 = initialization
  std::int64_t steps = 0;
  StepLosses train;  // mean over the epoch's steps; zeros at epoch 0
  double val_dice = 0.0;
  double val_seg = 0.0;
  std::optional<double> val_emd;
  std::optional<double> val_cd;
  bool improved = false;
};

struct RunRecord {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
  shapemetrics::MetricsReport test;

  std::string to_jsonl() const;
  std::string summary_json() const;
};

struct TrainResult {
  checkpoint::Archive best;
  RunRecord record;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

TrainResult train(const Dataset& data, const TrainConfig& cfg, const ProgressFn& progress = {});

// Per-case metrics; `points` is null for modes without a generator.
shapemetrics::CaseRecord case_metrics(const std::string& id, const std::string& split, const MaskVolume& pred,
                                      const MaskVolume& truth, const PointSet* points, const PointSet* gt);

shapemetrics::MetricsReport evaluate(Model& model, const Dataset& data, synthvol::Split split);
shapemetrics::MetricsReport evaluate(const checkpoint::Archive& a, const Dataset& data, synthvol::Split split);

// Writes checkpoint.bin, run.jsonl, summary.json, metrics.json, metrics.csv.
void write_run(const std::filesystem::path& dir, const TrainResult& r);

struct Comparison {
  std::string metric;
  double p_value = 1.0;
  std::size_t n_pairs = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::string better;  // "a", "b" or "tie"
  bool significant = false;
};

// Pairs cases by id; throws HarnessError when the id sets differ. Pairs with
// a missing value on either side are dropped.
Comparison compare_runs(const shapemetrics::MetricsReport& a, const shapemetrics::MetricsReport& b,
                        const std::string& metric);

// Concatenates reports with case ids prefixed "<seed>:".
shapemetrics::MetricsReport pool_reports(const std::string& name,
                                         const std::vector<std::pair<std::uint64_t, shapemetrics::MetricsReport>>& runs);

}  // namespace shapepoint::trainer
