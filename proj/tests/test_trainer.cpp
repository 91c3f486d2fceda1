#include <doctest.h>

#include <cmath>
#include <fstream>

#include "shapepoint/errors.hpp"
#include "shapepoint/experiment.hpp"
#include "shapepoint/io.hpp"
#include "shapepoint/trainer.hpp"
#include "test_util.hpp"

using namespace shapepoint;
using namespace shapepoint::trainer;

namespace {

// Eight simple cases at 32^3, generated once for the whole binary.
const Dataset& small_dataset() {
  static testutil::TempDir dir;
  static const Dataset data = [] {
    experiment::SynthPlan plan;
    plan.config = synthvol::SynthConfig::make(synthvol::Preset::kSimple, {32, 32, 32}, 21);
    plan.cases = 8;
    const auto manifest = experiment::synthesize(plan, dir.path / "data");
    return load_dataset(manifest, 64, 0);
  }();
  return data;
}

TrainConfig small_config(Mode mode) {
  TrainConfig c;
  c.mode = mode;
  c.n_points = 64;
  c.base_channels = 4;
  c.max_epochs = 2;
  c.seed = 5;
  c.weights.cd = c.weights.emd = 1.0;
  return c;
}

std::vector<std::vector<float>> values(const nn::ParamList<float>& ps) {
  std::vector<std::vector<float>> v;
  for (auto* p : ps) v.push_back(p->value.data);
  return v;
}

}  // namespace

TEST_CASE("mode names") {
  for (auto m : all_modes()) CHECK(mode_from_string(to_string(m)) == m);
  CHECK(to_string(Mode::kSegPointNetAl) == "seg+pointnet+al");
  CHECK_THROWS_AS(mode_from_string("seg+gan"), ConfigError);
  CHECK_FALSE(uses_generator(Mode::kSegOnly));
  CHECK(uses_generator(Mode::kSegTwoBranch));
  CHECK_FALSE(uses_adversary(Mode::kSegPointNet));
  CHECK(uses_adversary(Mode::kSegPointNetAl));
}

TEST_CASE("train config JSON") {
  auto c = small_config(Mode::kSegTwoBranch);
  c.seg_loss = backbone::SegLossKind::kSoftDice;
  c.weights.al = 0.25;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.mode == Mode::kSegTwoBranch);
  CHECK(back.weights.al == 0.25);
  CHECK_THROWS_WITH_AS(TrainConfig::from_json(R"({"learning_rate": 0.1})"), doctest::Contains("learning_rate"),
                       ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lr": "fast"})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"loss_weights": {"gan": 1}})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lr": -1})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"mode": "seg+two_branch", "n_points": 63})"), ConfigError);
}

TEST_CASE("dataset loading") {
  const auto& d = small_dataset();
  CHECK(d.cases.size() == 8);
  CHECK(d.in_split(synthvol::Split::kTrain).size() == 4);
  CHECK(d.dims == Dims{32, 32, 32});
  for (const auto& c : d.cases) {
    CHECK(c.gt.size() == 64);
    CHECK(c.input.shape == std::vector<int>{1, 32, 32, 32});
  }
}

TEST_CASE("each mode updates exactly its own parameters") {
  const auto& d = small_dataset();
  const auto* c = d.in_split(synthvol::Split::kTrain)[0];
  for (auto mode : all_modes()) {
    CAPTURE(to_string(mode));
    Model m(small_config(mode), d.dims);
    m.init();
    const auto bb = values(m.backbone_params()), gen = values(m.generator_params()),
               cls = values(m.classifier_params());
    Trainer t(m);
    const CaseData* batch[] = {c};
    const auto l = t.step(batch);
    CHECK(std::isfinite(l.total));
    CHECK(values(m.backbone_params()) != bb);
    CHECK((values(m.generator_params()) != gen) == uses_generator(mode));
    CHECK((values(m.classifier_params()) != cls) == uses_adversary(mode));
    CHECK((l.cd > 0.0) == uses_generator(mode));
    CHECK((l.al_d > 0.0) == uses_adversary(mode));
  }
}

TEST_CASE("adversarial losses start at the neutral values") {
  const auto& d = small_dataset();
  Model m(small_config(Mode::kSegPointNetAl), d.dims);
  m.init();
  Trainer t(m);
  const CaseData* batch[] = {d.in_split(synthvol::Split::kTrain)[0]};
  const auto l = t.step(batch);
  CHECK(l.al_d == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  CHECK(l.al_g == doctest::Approx(std::log(2.0)).epsilon(1e-3));
}

TEST_CASE("non-finite losses abort with the offending term") {
  const auto& d = small_dataset();
  Model m(small_config(Mode::kSegOnly), d.dims);
  m.init();
  for (auto* p : m.backbone_params()) p->value.fill(std::nanf(""));
  Trainer t(m);
  const CaseData* batch[] = {d.in_split(synthvol::Split::kTrain)[0]};
  CHECK_THROWS_WITH_AS(t.step(batch), doctest::Contains("seg"), DivergenceError);
}

TEST_CASE("training is deterministic and checkpoints reproduce metrics") {
  const auto& d = small_dataset();
  const auto cfg = small_config(Mode::kSegPointNetAl);
  const auto a = train(d, cfg);
  const auto b = train(d, cfg);
  CHECK(a.record.to_jsonl() == b.record.to_jsonl());
  CHECK(a.record.test.to_json() == b.record.test.to_json());
  CHECK(a.record.epochs.size() == 3);
  CHECK(a.record.epochs[0].epoch == 0);
  CHECK(a.record.test.cases.size() == 2);
  for (const auto& r : a.record.test.cases)
    for (const auto& name : {"dice", "emd", "cd", "outlier"}) CHECK(r.get(name).has_value());

  testutil::TempDir tmp;
  write_run(tmp.path / "run", a);
  for (const auto* f : {"checkpoint.bin", "run.jsonl", "summary.json", "metrics.json", "metrics.csv"})
    CHECK(std::filesystem::exists(tmp.path / "run" / f));
  const auto archive = checkpoint::load(tmp.path / "run" / "checkpoint.bin");
  const auto again = evaluate(archive, d, synthvol::Split::kTest);
  CHECK(again.to_json() == a.record.test.to_json());
}

TEST_CASE("different seeds give different runs") {
  const auto& d = small_dataset();
  auto cfg = small_config(Mode::kSegOnly);
  cfg.max_epochs = 1;
  const auto a = train(d, cfg);
  cfg.seed = 6;
  const auto b = train(d, cfg);
  CHECK(a.record.to_jsonl() != b.record.to_jsonl());
}

TEST_CASE("checkpoint format errors") {
  testutil::TempDir tmp;
  nn::Param<float> w("w", {2, 3});
  w.value.data = {1, 2, 3, 4, 5, 6};
  nn::Param<float> b("b", {3});
  auto a = checkpoint::capture({&w, &b}, R"({"x":1})", 7);
  checkpoint::save(tmp.path / "c.bin", a);
  const auto l = checkpoint::load(tmp.path / "c.bin");
  CHECK(l.step == 7);
  CHECK(l.tensors.at("w").data == w.value.data);
  CHECK(l.config_json == R"({"x":1})");

  nn::Param<float> wrong("w", {3, 2});
  CHECK_THROWS_AS(checkpoint::restore(l, {&wrong}), FormatError);
  nn::Param<float> missing("q", {1});
  CHECK_THROWS_AS(checkpoint::restore(l, {&missing}), FormatError);

  auto bytes = io::read_file(tmp.path / "c.bin");
  bytes[0] = 'X';
  io::atomic_write(tmp.path / "bad.bin", bytes);
  CHECK_THROWS_AS(checkpoint::load(tmp.path / "bad.bin"), FormatError);
  io::atomic_write(tmp.path / "short.bin", io::read_file(tmp.path / "c.bin").substr(0, 40));
  CHECK_THROWS_AS(checkpoint::load(tmp.path / "short.bin"), FormatError);
  CHECK_THROWS_AS(checkpoint::load(tmp.path / "absent.bin"), FormatError);
}

TEST_CASE("run comparison") {
  using shapemetrics::CaseRecord;
  using shapemetrics::MetricsReport;
  MetricsReport a, b;
  a.name = "a";
  b.name = "b";
  for (int i = 0; i < 8; ++i) {
    CaseRecord r;
    r.id = std::to_string(i);
    r.values["dice"] = 0.8 + 0.01 * i;
    a.cases.push_back(r);
    r.values["dice"] = 0.7 + 0.01 * i;
    b.cases.push_back(r);
  }
  const auto c = compare_runs(a, b, "dice");
  CHECK(c.n_pairs == 8);
  CHECK(c.better == "a");
  CHECK(c.significant);
  CHECK(c.p_value == doctest::Approx(2.0 / 256.0));
  b.cases[3].id = "x";
  CHECK_THROWS_WITH_AS(compare_runs(a, b, "dice"), doctest::Contains("x"), HarnessError);

  const auto pooled = pool_reports("a", {{1, a}, {2, a}});
  CHECK(pooled.cases.size() == 16);
  CHECK(pooled.cases[0].id == "1:0");
}

TEST_CASE("case metrics with an empty prediction") {
  const auto truth = testutil::ball({16, 16, 16}, 8, 8, 8, 4);
  const auto r = case_metrics("c", "test", MaskVolume({16, 16, 16}), truth, nullptr, nullptr);
  CHECK(r.missing_prediction);
  CHECK(r.get("dice") == 0.0);
  CHECK_FALSE(r.get("hd").has_value());
  CHECK_FALSE(r.get("emd").has_value());
}
