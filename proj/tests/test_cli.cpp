// Drives the shapepoint executable end to end.

#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shapepoint/io.hpp"
#include "shapepoint/surface.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Output {
  int code = 0;
  std::string out;
  std::string err;
};

// Runs the CLI with `args` (already shell-quoted) and an optional
// environment prefix.
Output run(const std::string& args, const std::string& env = "") {
  testutil::TempDir tmp;
  const auto out = tmp.path / "out", err = tmp.path / "err";
  const std::string cmd = env + " '" SHAPEPOINT_CLI "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Output o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = shapepoint::io::read_file(out);
  o.err = shapepoint::io::read_file(err);
  return o;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// All regular files below dir with their contents.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = shapepoint::io::read_file(e.path());
  return m;
}

void check_error_line(const Output& o, const std::string& kind) {
  CHECK(o.code != 0);
  CHECK(std::count(o.err.begin(), o.err.end(), '\n') == 1);
  const auto j = json::parse(o.err);
  CHECK(j.at("error") == kind);
  CHECK(j.at("message").is_string());
}

}  // namespace

TEST_CASE("help for every command") {
  for (const char* c : {"synth", "gt-points", "train", "eval", "compare", "export-ply"}) {
    const auto o = run(std::string(c) + " --help");
    CHECK(o.code == 0);
    CHECK(o.out.find("--") != std::string::npos);
  }
  const auto o = run("synth --help");
  for (const char* flag : {"--cases", "--preset", "--dims", "--seed", "--ratios", "--out", "--config"})
    CHECK(o.out.find(flag) != std::string::npos);
}

TEST_CASE("usage errors are single-line JSON") {
  check_error_line(run("frobnicate"), "UsageError");
  check_error_line(run("synth --cases notanumber"), "UsageError");
}

TEST_CASE("synth, gt-points and export-ply") {
  testutil::TempDir tmp;
  const auto data = tmp.path / "data";
  auto o = run("synth --cases 8 --preset complex --dims 32 --seed 7 --out " + q(data));
  REQUIRE(o.code == 0);
  CHECK(fs::exists(data / "manifest.json"));
  const auto manifest = json::parse(shapepoint::io::read_file(data / "manifest.json"));
  CHECK(manifest.at("cases").size() == 8);
  const auto first = snapshot(data);

  SUBCASE("rerun is byte-identical") {
    REQUIRE(run("synth --cases 8 --preset complex --dims 32 --seed 7 --out " + q(data)).code == 0);
    CHECK(snapshot(data) == first);
  }
  SUBCASE("environment seed overrides the flag") {
    const auto other = tmp.path / "env";
    REQUIRE(run("synth --cases 8 --preset complex --dims 32 --seed 0 --out " + q(other), "SHAPEPOINT_SEED=7").code == 0);
    CHECK(snapshot(other) == first);
  }
  SUBCASE("ground-truth points") {
    REQUIRE(run("gt-points --manifest " + q(data / "manifest.json") + " --n-points 64 --seed 3").code == 0);
    int cases = 0;
    for (const auto& e : fs::directory_iterator(data)) {
      if (!e.is_directory()) continue;
      ++cases;
      const auto p = shapepoint::surface::read_csv(e.path() / "points_gt.csv");
      CHECK(p.size() == 64);
      CHECK_NOTHROW(p.validate(64));
      CHECK(shapepoint::surface::read_ply_vertex_count(e.path() / "points_gt.ply") == 64);
    }
    CHECK(cases == 8);

    const auto csv = data / manifest.at("cases")[0].at("path").get<std::string>() / "points_gt.csv";
    REQUIRE(run("export-ply --csv " + q(csv) + " --dims 32 --out " + q(tmp.path / "x.ply")).code == 0);
    CHECK(shapepoint::surface::read_ply_vertex_count(tmp.path / "x.ply") == 64);
    check_error_line(run("export-ply --csv " + q(csv) + " --out " + q(tmp.path / "y.ply")), "ConfigError");
  }
  SUBCASE("missing case files") {
    fs::remove_all(data / manifest.at("cases")[2].at("path").get<std::string>());
    check_error_line(run("gt-points --manifest " + q(data / "manifest.json")), "FormatError");
  }
}

TEST_CASE("synth rejects configurations with an empty test split") {
  testutil::TempDir tmp;
  const auto o = run("synth --cases 2 --out " + q(tmp.path / "d"));
  check_error_line(o, "ConfigError");
  CHECK_FALSE(fs::exists(tmp.path / "d" / "manifest.json"));
  check_error_line(run("synth --preset wobbly --out " + q(tmp.path / "e")), "ConfigError");
}

TEST_CASE("train, eval, compare and checkpoint export") {
  testutil::TempDir tmp;
  std::ofstream(tmp.path / "spec.json") << R"({
    "synth": {"preset": "simple", "dims": 32, "cases": 24, "seed": 3},
    "train": {"max_epochs": 1, "base_channels": 2, "n_points": 32, "loss_weights": {"cd": 1, "emd": 1}},
    "modes": ["seg_only", "seg+pointnet"],
    "seeds": [1, 2]
  })";
  const auto spec = q(tmp.path / "spec.json");
  REQUIRE(run("synth --config " + spec).code == 0);
  CHECK(fs::exists(tmp.path / "data" / "manifest.json"));

  auto o = run("train --quiet --spec " + spec);
  REQUIRE(o.code == 0);
  for (const char* dir : {"seg_only_1", "seg_only_2", "seg+pointnet_1", "seg+pointnet_2"})
    for (const char* f : {"checkpoint.bin", "run.jsonl", "summary.json", "metrics.json", "metrics.csv"})
      CHECK(fs::exists(tmp.path / "runs" / dir / f));

  const auto before = shapepoint::io::read_file(tmp.path / "runs" / "seg+pointnet_1" / "metrics.json");
  REQUIRE(run("eval --spec " + spec).code == 0);
  CHECK(shapepoint::io::read_file(tmp.path / "runs" / "seg+pointnet_1" / "metrics.json") == before);

  o = run("compare --spec " + spec);
  REQUIRE(o.code == 0);
  CHECK(o.out.find("| dice |") != std::string::npos);
  const auto table = json::parse(shapepoint::io::read_file(tmp.path / "reports" / "comparison.json"));
  // one p-value per (baseline, variant, metric) that both modes report
  std::set<std::string> metrics;
  for (const auto& row : table.at("p_values")) {
    CHECK(row.at("baseline") == "seg_only");
    CHECK(row.at("variant") == "seg+pointnet");
    metrics.insert(row.at("metric").get<std::string>());
  }
  CHECK(metrics == std::set<std::string>{"dice", "hd", "avgd"});
  CHECK(fs::exists(tmp.path / "reports" / "comparison.md"));

  const auto manifest = json::parse(shapepoint::io::read_file(tmp.path / "data" / "manifest.json"));
  const std::string id = manifest.at("cases")[0].at("id");
  o = run("export-ply --checkpoint " + q(tmp.path / "runs" / "seg+pointnet_1" / "checkpoint.bin") + " --manifest " +
          q(tmp.path / "data" / "manifest.json") + " --case " + id + " --out " + q(tmp.path / "p.ply") +
          " --csv-out " + q(tmp.path / "p.csv"));
  REQUIRE(o.code == 0);
  CHECK(shapepoint::surface::read_ply_vertex_count(tmp.path / "p.ply") == 32);
  CHECK(shapepoint::surface::read_csv(tmp.path / "p.csv").size() == 32);
  check_error_line(run("export-ply --checkpoint " + q(tmp.path / "runs" / "seg_only_1" / "checkpoint.bin") +
                       " --manifest " + q(tmp.path / "data" / "manifest.json") + " --case " + id + " --out " +
                       q(tmp.path / "n.ply")),
                   "ConfigError");

  fs::remove(tmp.path / "runs" / "seg_only_2" / "metrics.json");
  check_error_line(run("compare --spec " + spec), "ConfigError");
}

TEST_CASE("spec validation errors name the field") {
  testutil::TempDir tmp;
  std::ofstream(tmp.path / "spec.json") << R"({"train": {"lr": 0.1, "momentum": 0.9}})";
  const auto o = run("train --spec " + q(tmp.path / "spec.json"));
  check_error_line(o, "ConfigError");
  CHECK(o.err.find("momentum") != std::string::npos);
  std::ofstream(tmp.path / "bad.json") << R"({"modes": ["seg_only", "unet++"]})";
  check_error_line(run("train --spec " + q(tmp.path / "bad.json")), "ConfigError");
}
