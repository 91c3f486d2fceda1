#include "shapepoint/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "shapepoint/errors.hpp"
#include "shapepoint/io.hpp"

namespace shapepoint::trainer {

using nlohmann::json;
using synthvol::Split;

// -- modes and config ---------------------------------------------------------------------

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kSegOnly: return "seg_only";
    case Mode::kSegTwoBranch: return "seg+two_branch";
    case Mode::kSegPointNet: return "seg+pointnet";
    case Mode::kSegPointNetAl: return "seg+pointnet+al";
  }
  throw InternalError("unknown mode");
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : all_modes())
    if (to_string(m) == s) return m;
  throw ConfigError("mode: unknown value '" + s +
                    "' (expected seg_only, seg+two_branch, seg+pointnet or seg+pointnet+al)");
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes{Mode::kSegOnly, Mode::kSegTwoBranch, Mode::kSegPointNet, Mode::kSegPointNetAl};
  return modes;
}

bool uses_generator(Mode m) { return m != Mode::kSegOnly; }
bool uses_adversary(Mode m) { return m == Mode::kSegPointNetAl; }

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  for (auto [name, w] : {std::pair{"loss_weights.seg", weights.seg}, std::pair{"loss_weights.cd", weights.cd},
                         std::pair{"loss_weights.emd", weights.emd}, std::pair{"loss_weights.al", weights.al}})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError(std::string(name) + " must be >= 0");
  if (val_every < 1) throw ConfigError("val_every must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(noise_range >= 0.0)) throw ConfigError("noise_range must be >= 0");
  if (n_points < 2) throw ConfigError("n_points must be >= 2");
  if (mode == Mode::kSegTwoBranch && n_points % 2 != 0) throw ConfigError("n_points must be even for seg+two_branch");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
}

std::string TrainConfig::to_json() const {
  json j{{"lr", lr},
         {"batch_size", batch_size},
         {"max_epochs", max_epochs},
         {"loss_weights", {{"seg", weights.seg}, {"cd", weights.cd}, {"emd", weights.emd}, {"al", weights.al}}},
         {"mode", to_string(mode)},
         {"seed", seed},
         {"val_every", val_every},
         {"patience", patience},
         {"noise_range", noise_range},
         {"n_points", n_points},
         {"base_channels", base_channels},
         {"seg_loss", seg_loss == backbone::SegLossKind::kBce ? "bce" : "soft_dice"},
         {"gt_seed", gt_seed}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected an object");
  TrainConfig c;
  static const std::set<std::string> known{"lr",          "batch_size", "max_epochs", "loss_weights", "mode",
                                           "seed",        "val_every",  "patience",   "noise_range",  "n_points",
                                           "base_channels", "seg_loss", "gt_seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("train config: unknown field '" + k + "'");
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j[key].get<std::remove_reference_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("train config: field '") + key + "' has the wrong type");
    }
  };
  get("lr", c.lr);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("seed", c.seed);
  get("val_every", c.val_every);
  get("patience", c.patience);
  get("noise_range", c.noise_range);
  get("n_points", c.n_points);
  get("base_channels", c.base_channels);
  get("gt_seed", c.gt_seed);
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) throw ConfigError("train config: field 'mode' must be a string");
    c.mode = mode_from_string(j["mode"].get<std::string>());
  }
  if (j.contains("seg_loss")) {
    const std::string s = j["seg_loss"].is_string() ? j["seg_loss"].get<std::string>() : "";
    if (s == "bce")
      c.seg_loss = backbone::SegLossKind::kBce;
    else if (s == "soft_dice")
      c.seg_loss = backbone::SegLossKind::kSoftDice;
    else
      throw ConfigError("train config: field 'seg_loss' must be \"bce\" or \"soft_dice\"");
  }
  if (j.contains("loss_weights")) {
    const json& w = j["loss_weights"];
    if (!w.is_object()) throw ConfigError("train config: field 'loss_weights' must be an object");
    for (const auto& [k, v] : w.items()) {
      if (!v.is_number()) throw ConfigError("train config: field 'loss_weights." + k + "' must be a number");
      if (k == "seg")
        c.weights.seg = v.get<double>();
      else if (k == "cd")
        c.weights.cd = v.get<double>();
      else if (k == "emd")
        c.weights.emd = v.get<double>();
      else if (k == "al")
        c.weights.al = v.get<double>();
      else
        throw ConfigError("train config: unknown field 'loss_weights." + k + "'");
    }
  }
  c.validate();
  return c;
}

std::uint64_t gt_sampling_seed(std::uint64_t gt_seed, std::size_t case_index) {
  return derive_seed(gt_seed, Stream::kFps, case_index);
}

// -- data ---------------------------------------------------------------------------------------

std::vector<const CaseData*> Dataset::in_split(Split s) const {
  std::vector<const CaseData*> out;
  for (const auto& c : cases)
    if (c.split == s) out.push_back(&c);
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, int n_points, std::uint64_t gt_seed) {
  Dataset d;
  d.manifest_path = manifest_path;
  d.manifest = synthvol::load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  for (std::size_t i = 0; i < d.manifest.cases.size(); ++i) {
    const auto& e = d.manifest.cases[i];
    const auto dir = root / e.path;
    auto loaded = synthvol::load_case(dir);
    CaseData c;
    c.id = e.id;
    c.split = e.split;
    c.volume = std::move(loaded.volume);
    c.mask = std::move(loaded.mask);
    if (i == 0)
      d.dims = c.volume.dims;
    else if (!(c.volume.dims == d.dims))
      throw ShapeError("case " + c.id + " has dims " + c.volume.dims.str() + ", expected " + d.dims.str());
    const auto csv = dir / "points_gt.csv";
    bool have = false;
    if (std::filesystem::exists(csv)) {
      c.gt = surface::read_csv(csv);
      have = c.gt.size() == static_cast<std::size_t>(n_points);
    }
    if (!have) c.gt = surface::gt_points(c.mask, static_cast<std::size_t>(n_points), gt_sampling_seed(gt_seed, i));
    c.input = backbone::volume_tensor<float>(c.volume);
    c.gt_tensor = pointgen::to_tensor<float>(c.gt);
    d.cases.push_back(std::move(c));
  }
  if (d.cases.empty()) throw ConfigError("manifest '" + manifest_path.string() + "' lists no cases");
  backbone::check_input_dims(d.dims);
  return d;
}

// -- model ----------------------------------------------------------------------------------------

namespace {

backbone::UNetConfig unet_config(const TrainConfig& c) {
  backbone::UNetConfig u;
  u.base_channels = c.base_channels;
  return u;
}

Dims coarse_dims(Dims d) {
  const int f = 1 << backbone::kDepth;
  return {d.d / f, d.h / f, d.w / f};
}

}  // namespace

Model::Model(const TrainConfig& cfg, Dims dims) : unet(unet_config(cfg)), cfg_(cfg), dims_(dims) {
  cfg_.validate();
  backbone::check_input_dims(dims);
  if (cfg.mode == Mode::kSegTwoBranch) {
    generator = std::make_unique<pointgen::TwoBranch<float>>(unet.coarse_channels(), coarse_dims(dims), cfg.n_points);
  } else {
    pointgen::PointNetConfig pc;
    pc.n_points = cfg.n_points;
    generator = std::make_unique<pointgen::PointNetwork<float>>(unet.coarse_channels(), unet.fine_channels(), pc);
  }
}

void Model::init() {
  Rng rng(derive_seed(cfg_.seed, Stream::kInit));
  unet.init(rng);
  generator->init(rng);
  classifier.init(rng);
}

nn::ParamList<float> Model::backbone_params() {
  nn::ParamList<float> p;
  unet.params(p);
  return p;
}

nn::ParamList<float> Model::generator_params() {
  nn::ParamList<float> p;
  generator->params(p);
  return p;
}

nn::ParamList<float> Model::classifier_params() {
  nn::ParamList<float> p;
  classifier.params(p);
  return p;
}

nn::ParamList<float> Model::all_params() {
  nn::ParamList<float> p = backbone_params();
  for (auto* x : generator_params()) p.push_back(x);
  for (auto* x : classifier_params()) p.push_back(x);
  return p;
}

std::string Model::snapshot_json() const {
  json j{{"train", json::parse(cfg_.to_json())}, {"dims", {dims_.d, dims_.h, dims_.w}}};
  return j.dump();
}

std::unique_ptr<Model> Model::from_archive(const checkpoint::Archive& a) {
  json j;
  try {
    j = json::parse(a.config_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: config snapshot is not JSON: ") + e.what());
  }
  if (!j.contains("train") || !j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
    throw FormatError("checkpoint: config snapshot lacks 'train' or 'dims'");
  const TrainConfig cfg = TrainConfig::from_json(j["train"].dump());
  const Dims dims{j["dims"][0].get<int>(), j["dims"][1].get<int>(), j["dims"][2].get<int>()};
  auto m = std::make_unique<Model>(cfg, dims);
  checkpoint::restore(a, m->all_params());
  return m;
}

// -- training step ----------------------------------------------------------------------------------

StepLosses& StepLosses::operator+=(const StepLosses& o) {
  seg += o.seg;
  cd += o.cd;
  emd += o.emd;
  al_g += o.al_g;
  al_d += o.al_d;
  total += o.total;
  return *this;
}

StepLosses StepLosses::scaled(double f) const {
  return {seg * f, cd * f, emd * f, al_g * f, al_d * f, total * f};
}

namespace {

nn::ParamList<float> optimized_generator_params(Model& m) {
  nn::ParamList<float> p = m.backbone_params();
  if (uses_generator(m.config().mode))
    for (auto* x : m.generator_params()) p.push_back(x);
  return p;
}

void check_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v))
    throw DivergenceError("non-finite " + std::string(term) + " loss at step " + std::to_string(step));
}

}  // namespace

Trainer::Trainer(Model& model)
    : model_(model),
      opt_g_(optimized_generator_params(model), nn::AdamConfig{model.config().lr}),
      opt_d_(model.classifier_params(), nn::AdamConfig{model.config().lr}) {}

StepLosses Trainer::step(std::span<const CaseData* const> batch) {
  const TrainConfig& cfg = model_.config();
  const LossWeights& w = cfg.weights;
  const bool gen = uses_generator(cfg.mode);
  const bool adv = uses_adversary(cfg.mode);
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  opt_g_.zero_grad();
  StepLosses sum;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const CaseData& c = *batch[b];
    const std::int64_t tag = steps_ * static_cast<std::int64_t>(batch.size()) + static_cast<std::int64_t>(b);
    StepLosses l;
    auto out = model_.unet.forward(c.input);
    auto seg = backbone::seg_loss(out.prob, c.mask, cfg.seg_loss);
    l.seg = seg.value;
    check_finite(l.seg, "seg", steps_);

    nn::Tensor<float> d_logits = seg.d_logits;
    for (auto& v : d_logits.data) v *= static_cast<float>(w.seg) * inv_b;
    nn::Tensor<float> d_xc, d_xf;

    if (gen) {
      const nn::Tensor<float> p = model_.generator->forward(out.pyramid);
      const PointSet ps = pointgen::to_pointset(p);
      const auto cd = shapemetrics::chamfer_with_grad(ps, c.gt);
      const auto em = shapemetrics::emd(ps, c.gt);
      const auto em_grad = shapemetrics::emd_grad(ps, c.gt, em.match.assignment);
      l.cd = cd.value;
      l.emd = em.value;
      check_finite(l.cd, "cd", steps_);
      check_finite(l.emd, "emd", steps_);

      nn::Tensor<float> dp(p.shape);
      for (std::size_t i = 0; i < ps.size(); ++i)
        for (int a = 0; a < 3; ++a)
          dp[3 * i + a] = static_cast<float>(w.cd * cd.grad_p[i][a] + w.emd * em_grad[i][a]);

      if (adv) {
        const PointSet hat = surface::perturb_points(c.gt, cfg.noise_range, derive_seed(cfg.seed, Stream::kGtNoise, tag));
        const nn::Tensor<float> hat_t = pointgen::to_tensor<float>(hat);
        opt_d_.zero_grad();
        const auto ad = adversary::discriminator_backward(model_.classifier, p, hat_t);
        l.al_d = ad.loss_d;
        check_finite(l.al_d, "adversarial discriminator", steps_);
        opt_d_.step();
        const nn::Tensor<float> dp_al = adversary::generator_backward(model_.classifier, p, &l.al_g);
        check_finite(l.al_g, "adversarial generator", steps_);
        for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += static_cast<float>(w.al) * dp_al[i];
      }
      for (auto& v : dp.data) v *= inv_b;
      auto g = model_.generator->backward(dp);
      d_xc = std::move(g.d_xc);
      d_xf = std::move(g.d_xf);
    }
    model_.unet.backward(d_xc, d_xf, d_logits);
    l.total = w.seg * l.seg;
    if (gen) l.total += w.cd * l.cd + w.emd * l.emd;
    if (adv) l.total += w.al * l.al_g;
    check_finite(l.total, "total", steps_);
    sum += l;
  }
  opt_g_.step();
  ++steps_;
  return sum.scaled(1.0 / static_cast<double>(batch.size()));
}

// -- evaluation -----------------------------------------------------------------------------------

shapemetrics::CaseRecord case_metrics(const std::string& id, const std::string& split, const MaskVolume& pred,
                                      const MaskVolume& truth, const PointSet* points, const PointSet* gt) {
  shapemetrics::CaseRecord r;
  r.id = id;
  r.split = split;
  r.values["dice"] = shapemetrics::dice(pred, truth);
  if (pred.foreground_count() == 0) {
    r.missing_prediction = true;
  } else {
    const auto sd = shapemetrics::surface_distances(pred, truth);
    double hd = 0.0, sum = 0.0;
    for (double v : sd.a_to_b) hd = std::max(hd, v), sum += v;
    for (double v : sd.b_to_a) hd = std::max(hd, v), sum += v;
    r.values["hd"] = hd;
    r.values["avgd"] = sum / static_cast<double>(sd.a_to_b.size() + sd.b_to_a.size());
  }
  if (points && gt) {
    r.values["emd"] = shapemetrics::emd(*points, *gt).value;
    r.values["cd"] = shapemetrics::chamfer(*points, *gt);
    r.values["outlier"] = shapemetrics::outlier_fraction(*points, *gt);
  }
  return r;
}

shapemetrics::MetricsReport evaluate(Model& model, const Dataset& data, Split split) {
  const auto cases = data.in_split(split);
  if (cases.empty()) throw ConfigError("evaluate: split '" + synthvol::to_string(split) + "' is empty");
  const bool gen = uses_generator(model.config().mode);
  shapemetrics::MetricsReport rep;
  rep.name = to_string(model.config().mode) + "_" + std::to_string(model.config().seed);
  for (const CaseData* c : cases) {
    auto out = model.unet.forward(c->input);
    const MaskVolume pred = backbone::threshold(out.prob, c->mask.dims);
    std::optional<PointSet> p;
    if (gen) p = pointgen::to_pointset(model.generator->forward(out.pyramid));
    rep.cases.push_back(case_metrics(c->id, synthvol::to_string(split), pred, c->mask, p ? &*p : nullptr,
                                     p ? &c->gt : nullptr));
  }
  rep.recompute_aggregates();
  return rep;
}

shapemetrics::MetricsReport evaluate(const checkpoint::Archive& a, const Dataset& data, Split split) {
  auto m = Model::from_archive(a);
  if (!(m->dims() == data.dims))
    throw ShapeError("checkpoint dims " + m->dims().str() + " differ from dataset dims " + data.dims.str());
  return evaluate(*m, data, split);
}

// -- training loop -------------------------------------------------------------------------------

namespace {

EpochRecord validate_epoch(Model& model, const Dataset& data) {
  EpochRecord r;
  const bool gen = uses_generator(model.config().mode);
  const auto cases = data.in_split(Split::kValidation);
  double dice = 0.0, seg = 0.0, emd = 0.0, cd = 0.0;
  for (const CaseData* c : cases) {
    auto out = model.unet.forward(c->input);
    seg += backbone::seg_loss(out.prob, c->mask, model.config().seg_loss).value;
    dice += shapemetrics::dice(backbone::threshold(out.prob, c->mask.dims), c->mask);
    if (gen) {
      const PointSet p = pointgen::to_pointset(model.generator->forward(out.pyramid));
      emd += shapemetrics::emd(p, c->gt).value;
      cd += shapemetrics::chamfer(p, c->gt);
    }
  }
  const double n = static_cast<double>(cases.size());
  r.val_dice = dice / n;
  r.val_seg = seg / n;
  if (gen) {
    r.val_emd = emd / n;
    r.val_cd = cd / n;
  }
  return r;
}

json losses_json(const StepLosses& l) {
  return {{"seg", l.seg}, {"cd", l.cd}, {"emd", l.emd}, {"al_g", l.al_g}, {"al_d", l.al_d}, {"total", l.total}};
}

json epoch_json(const EpochRecord& e) {
  json j{{"epoch", e.epoch},
         {"steps", e.steps},
         {"train", losses_json(e.train)},
         {"val_dice", e.val_dice},
         {"val_seg", e.val_seg},
         {"val_emd", e.val_emd ? json(*e.val_emd) : json(nullptr)},
         {"val_cd", e.val_cd ? json(*e.val_cd) : json(nullptr)},
         {"improved", e.improved}};
  return j;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const auto train_cases = data.in_split(Split::kTrain);
  if (train_cases.empty()) throw ConfigError("train split is empty");
  if (data.in_split(Split::kValidation).empty()) throw ConfigError("validation split is empty");
  if (data.in_split(Split::kTest).empty()) throw ConfigError("test split is empty");

  Model model(cfg, data.dims);
  model.init();
  Trainer trainer(model);

  TrainResult res;
  res.record.mode = to_string(cfg.mode);
  res.record.seed = cfg.seed;

  double best_dice = -1.0;
  int rounds_since_best = 0;
  auto run_validation = [&](EpochRecord rec) {
    const EpochRecord v = validate_epoch(model, data);
    rec.val_dice = v.val_dice;
    rec.val_seg = v.val_seg;
    rec.val_emd = v.val_emd;
    rec.val_cd = v.val_cd;
    rec.steps = trainer.steps();
    if (rec.val_dice > best_dice) {
      best_dice = rec.val_dice;
      rec.improved = true;
      rounds_since_best = 0;
      res.record.best_epoch = rec.epoch;
      res.best = checkpoint::capture(model.all_params(), model.snapshot_json(), trainer.steps());
    } else {
      ++rounds_since_best;
    }
    res.record.epochs.push_back(rec);
    if (progress) progress(rec);
  };

  run_validation(EpochRecord{});
  std::vector<const CaseData*> order = train_cases;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order = train_cases;
    Rng rng(derive_seed(cfg.seed, Stream::kDataOrder, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    StepLosses sum;
    std::size_t n_steps = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - i, static_cast<std::size_t>(cfg.batch_size));
      sum += trainer.step(std::span<const CaseData* const>(order.data() + i, len));
      ++n_steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = sum.scaled(1.0 / static_cast<double>(n_steps));
    if (epoch % cfg.val_every == 0 || epoch == cfg.max_epochs) {
      run_validation(rec);
      if (rounds_since_best >= cfg.patience && epoch < cfg.max_epochs) {
        res.record.early_stopped = true;
        break;
      }
    } else {
      rec.steps = trainer.steps();
      res.record.epochs.push_back(rec);
      if (progress) progress(rec);
    }
  }

  checkpoint::restore(res.best, model.all_params());
  res.record.test = evaluate(model, data, Split::kTest);
  return res;
}

std::string RunRecord::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) out += epoch_json(e).dump() + "\n";
  return out;
}

std::string RunRecord::summary_json() const {
  json j{{"mode", mode}, {"seed", seed}, {"best_epoch", best_epoch}, {"early_stopped", early_stopped},
         {"epochs_run", epochs.empty() ? 0 : epochs.back().epoch}};
  json agg = json::object();
  for (const auto& [m, a] : test.aggregates) agg[m] = {{"mean", a.mean}, {"sd", a.sd}, {"n", a.n}};
  j["test"] = agg;
  return j.dump(2) + "\n";
}

void write_run(const std::filesystem::path& dir, const TrainResult& r) {
  checkpoint::save(dir / "checkpoint.bin", r.best);
  io::atomic_write(dir / "run.jsonl", r.record.to_jsonl());
  io::atomic_write(dir / "summary.json", r.record.summary_json());
  io::atomic_write(dir / "metrics.json", r.record.test.to_json());
  io::atomic_write(dir / "metrics.csv", r.record.test.to_csv());
}

// -- comparison -----------------------------------------------------------------------------------

Comparison compare_runs(const shapemetrics::MetricsReport& a, const shapemetrics::MetricsReport& b,
                        const std::string& metric) {
  std::map<std::string, const shapemetrics::CaseRecord*> ia, ib;
  for (const auto& c : a.cases) ia[c.id] = &c;
  for (const auto& c : b.cases) ib[c.id] = &c;
  std::string only_a, only_b;
  for (const auto& [id, _] : ia)
    if (!ib.count(id)) only_a += (only_a.empty() ? "" : ",") + id;
  for (const auto& [id, _] : ib)
    if (!ia.count(id)) only_b += (only_b.empty() ? "" : ",") + id;
  if (!only_a.empty() || !only_b.empty())
    throw HarnessError("case sets differ: only in '" + a.name + "': [" + only_a + "]; only in '" + b.name + "': [" +
                       only_b + "]");
  std::vector<double> xa, xb;
  for (const auto& [id, ca] : ia) {
    const auto va = ca->get(metric), vb = ib[id]->get(metric);
    if (va && vb) {
      xa.push_back(*va);
      xb.push_back(*vb);
    }
  }
  Comparison c;
  c.metric = metric;
  c.n_pairs = xa.size();
  if (xa.empty()) {
    c.better = "tie";
    return c;
  }
  c.mean_a = shapemetrics::aggregate(xa).mean;
  c.mean_b = shapemetrics::aggregate(xb).mean;
  c.p_value = shapemetrics::wilcoxon_signed_rank(xa, xb).p_value;
  if (c.mean_a == c.mean_b)
    c.better = "tie";
  else
    c.better = ((c.mean_a > c.mean_b) == shapemetrics::higher_is_better(metric)) ? "a" : "b";
  c.significant = c.p_value < 0.05;
  return c;
}

shapemetrics::MetricsReport pool_reports(const std::string& name,
                                         const std::vector<std::pair<std::uint64_t, shapemetrics::MetricsReport>>& runs) {
  shapemetrics::MetricsReport out;
  out.name = name;
  for (const auto& [seed, rep] : runs)
    for (auto c : rep.cases) {
      c.id = std::to_string(seed) + ":" + c.id;
      out.cases.push_back(std::move(c));
    }
  out.recompute_aggregates();
  return out;
}

}  // namespace shapepoint::trainer
