// shapepoint: synthesize data, extract ground-truth points, train, evaluate,
// compare and export.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/experiment.hpp"
#include "shapepoint/io.hpp"
#include "shapepoint/surface.hpp"
#include "shapepoint/synthvol.hpp"
#include "shapepoint/trainer.hpp"

namespace fs = std::filesystem;
using namespace shapepoint;

namespace {

void fail(const char* kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

Dims parse_dims(const std::string& s) {
  std::vector<int> v;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string part = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("dims: cannot parse '" + s + "' (expected D or D,H,W)");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("dims: expected D or D,H,W, got '" + s + "'");
}

experiment::ExperimentSpec load_spec_with_env(const fs::path& file) {
  auto spec = experiment::load_spec(file);
  if (auto s = experiment::env_seed()) experiment::apply_seed_override(spec, *s);
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface point-set learning for volumetric segmentation on synthetic shapes"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic cases and a split manifest");
  int cases = 40;
  std::string preset = "simple", dims = "32", out, synth_config, ratios_str = "0.5,0.25,0.25";
  std::uint64_t synth_seed = 0;
  synth->add_option("--cases", cases, "Number of cases")->capture_default_str();
  synth->add_option("--preset", preset, "Shape preset: simple or complex")->capture_default_str();
  synth->add_option("--dims", dims, "Grid size D or D,H,W")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Master seed (SHAPEPOINT_SEED overrides)")->capture_default_str();
  synth->add_option("--ratios", ratios_str, "Train,validation,test fractions")->capture_default_str();
  synth->add_option("--out", out, "Output directory (default: the spec's data path with --config)");
  synth->add_option("--config", synth_config, "Experiment spec JSON; its synth section replaces the flags");

  // gt-points
  auto* gt = app.add_subcommand("gt-points", "Write points_gt.csv and points_gt.ply for every case");
  std::string manifest;
  int n_points = static_cast<int>(surface::kDefaultPoints);
  std::uint64_t gt_seed = 0;
  gt->add_option("--manifest", manifest, "Path to manifest.json")->required();
  gt->add_option("--n-points", n_points, "Points per case (2048 in the original experiments)")->capture_default_str();
  gt->add_option("--seed", gt_seed, "Sampling seed; must equal the train config's gt_seed")->capture_default_str();

  // train / eval / compare
  std::string spec_path;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train the mode matrix over all seeds into runs/<mode>_<seed>/");
  train->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress lines");
  auto* eval = app.add_subcommand("eval", "Re-evaluate every run checkpoint on the test split");
  eval->add_option("--spec", spec_path, "Experiment spec JSON")->required();
  auto* compare = app.add_subcommand("compare", "Pool runs over seeds and write Markdown and JSON comparison tables");
  compare->add_option("--spec", spec_path, "Experiment spec JSON")->required();

  // export-ply
  auto* exp = app.add_subcommand("export-ply", "Export a point set as ASCII PLY in voxel coordinates");
  std::string csv_in, ckpt, case_id, ply_out, csv_out, exp_dims;
  exp->add_option("--csv", csv_in, "Normalized point CSV (header z,y,x)");
  exp->add_option("--dims", exp_dims, "Grid size D or D,H,W used to de-normalize --csv input");
  exp->add_option("--checkpoint", ckpt, "Run checkpoint; generates points for --case");
  exp->add_option("--manifest", manifest, "Manifest holding --case (with --checkpoint)");
  exp->add_option("--case", case_id, "Case id (with --checkpoint)");
  exp->add_option("--out", ply_out, "Output PLY file")->required();
  exp->add_option("--csv-out", csv_out, "Also write the normalized points as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("UsageError", e.what());
    return 2;
  }

  try {
    if (*synth) {
      experiment::SynthPlan plan;
      fs::path out_dir = out;
      if (!synth_config.empty()) {
        auto spec = experiment::load_spec(synth_config);
        plan = spec.synth;
        if (out_dir.empty()) out_dir = spec.data_dir;
      } else {
        plan.config = synthvol::SynthConfig::make(synthvol::preset_from_string(preset), parse_dims(dims), synth_seed);
        plan.cases = cases;
        std::vector<double> rv;
        std::stringstream ss(ratios_str);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            rv.push_back(std::stod(item));
          } catch (const std::exception&) {
            throw ConfigError("ratios: cannot parse '" + ratios_str + "'");
          }
        }
        if (rv.size() != 3) throw ConfigError("ratios: expected three comma-separated fractions");
        plan.ratios = {rv[0], rv[1], rv[2]};
      }
      if (out_dir.empty()) throw ConfigError("out: required without --config");
      if (auto s = experiment::env_seed()) plan.config.seed = *s;
      const auto file = experiment::synthesize(plan, out_dir);
      std::cout << file.string() << std::endl;
    } else if (*gt) {
      experiment::write_gt_points(manifest, n_points, gt_seed);
    } else if (*train) {
      const auto spec = load_spec_with_env(spec_path);
      experiment::RunProgress progress;
      if (!quiet)
        progress = [](trainer::Mode m, std::uint64_t seed, const trainer::EpochRecord& e) {
          std::printf("%s seed %llu epoch %d: loss %.5f val dice %.4f%s\n", trainer::to_string(m).c_str(),
                      static_cast<unsigned long long>(seed), e.epoch, e.train.total, e.val_dice,
                      e.improved ? " *" : "");
          std::fflush(stdout);
        };
      experiment::train_all(spec, progress);
    } else if (*eval) {
      experiment::eval_all(load_spec_with_env(spec_path));
    } else if (*compare) {
      const auto t = experiment::compare_all(load_spec_with_env(spec_path));
      std::cout << t.markdown;
    } else if (*exp) {
      PointSet p;
      Dims d;
      if (!ckpt.empty()) {
        if (manifest.empty() || case_id.empty()) throw ConfigError("export-ply: --checkpoint needs --manifest and --case");
        const auto archive = checkpoint::load(ckpt);
        auto model = trainer::Model::from_archive(archive);
        if (!trainer::uses_generator(model->config().mode))
          throw ConfigError("export-ply: checkpoint mode " + trainer::to_string(model->config().mode) +
                            " has no point generator");
        const auto m = synthvol::load_manifest(manifest);
        const synthvol::ManifestEntry* entry = nullptr;
        for (const auto& e : m.cases)
          if (e.id == case_id) entry = &e;
        if (!entry) throw ConfigError("export-ply: case '" + case_id + "' is not in the manifest");
        const auto c = synthvol::load_case(fs::path(manifest).parent_path() / entry->path);
        auto outp = model->unet.forward(backbone::volume_tensor<float>(c.volume));
        p = pointgen::to_pointset(model->generator->forward(outp.pyramid));
        d = c.volume.dims;
      } else if (!csv_in.empty()) {
        if (exp_dims.empty()) throw ConfigError("export-ply: --csv needs --dims");
        p = surface::read_csv(csv_in);
        d = parse_dims(exp_dims);
      } else {
        throw ConfigError("export-ply: give --csv or --checkpoint");
      }
      p.validate();
      surface::write_ply(ply_out, p, d);
      if (!csv_out.empty()) surface::write_csv(csv_out, p);
    }
  } catch (const Error& e) {
    fail(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("InternalError", e.what());
    return 1;
  }
  return 0;
}
