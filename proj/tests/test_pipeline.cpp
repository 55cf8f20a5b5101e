#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "gbm/evaluation.hpp"
#include "gbm/fixtures.hpp"
#include "gbm/pipeline.hpp"
#include "gbm/raster_io.hpp"
#include "test_util.hpp"

using namespace gbm;
using testutil::errc_of;
namespace fs = std::filesystem;

namespace {

SyntheticWorldSpec small_spec() {
  SyntheticWorldSpec s;
  s.cell_pixels = 128;
  s.buildings_per_cell = 25;
  s.max_building_px = 14;
  s.decoys_per_cell = 3;
  return s;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(GBM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Rewrites one key of a JSON config file into a sibling file.
fs::path variant(const fs::path& config, const std::string& name, const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json j = nlohmann::json::parse(testutil::slurp(config));
  edit(j);
  const fs::path out = config.parent_path() / name;
  testutil::spit(out, j.dump(2));
  return out;
}

const char* kMinimal = R"({"inputs":{"manifest":"m.csv","settlement":"s.tif","landcover":"l.tif","urban":"u.tif"}})";

}  // namespace

TEST_CASE("round robin assignment") {
  for (int workers : {1, 2, 3, 4}) {
    std::mutex mu;
    std::map<std::size_t, std::thread::id> who;
    run_round_robin(11, workers, [&](std::size_t t) {
      std::lock_guard lock(mu);
      who[t] = std::this_thread::get_id();
    });
    REQUIRE(who.size() == 11);
    for (std::size_t t = 0; t < 11; ++t) CHECK(who[t] == who[t % static_cast<std::size_t>(workers)]);
    std::set<std::thread::id> distinct;
    for (const auto& [t, id] : who) distinct.insert(id);
    CHECK(distinct.size() == static_cast<std::size_t>(workers));
  }
  std::atomic<int> ran{0};
  CHECK_THROWS_AS(run_round_robin(8, 3,
                                  [&](std::size_t t) {
                                    ++ran;
                                    if (t == 4) throw std::runtime_error("boom");
                                  }),
                  std::runtime_error);
  CHECK(ran >= 7);
}

TEST_CASE("config parsing and validation") {
  const PipelineConfig c = parse_config(kMinimal, "/base");
  CHECK(c.inputs.manifest == fs::path("/base/m.csv"));
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.segmenters.size() == 4);
  CHECK(c.vote_threshold == 2);
  CHECK_FALSE(c.inputs.polygons);

  auto code = [](const std::string& text) { return errc_of([&] { (void)parse_config(text, "/b"); }); };
  const std::string inputs = R"("inputs":{"manifest":"m.csv","settlement":"s.tif","landcover":"l.tif","urban":"u.tif"})";
  CHECK(code("{") == Errc::config);
  CHECK(code("{}") == Errc::config);
  CHECK(code("{" + inputs + R"(,"colour":"blue"})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"solar":{"a_p":10,"tilt":3}})") == Errc::config);
  CHECK(code(R"({"inputs":{"manifest":"m.csv","settlement":"s.tif","landcover":"l.tif"}})") == Errc::config);
  CHECK(code(R"({"inputs":{"manifest":"m.csv","settlement":"s.tif","landcover":"l.tif","urban":"u.tif","dem":"d.tif"}})") ==
        Errc::config);
  CHECK(code("{" + inputs + R"(,"workers":"four"})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"workers":0})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"vote_threshold":5})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"grid_size_deg":0.25})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"tile_size_deg":1})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"segmenters":["unet"]})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"segmenters":[]})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"calibration_mode":"per-city"})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"cloud_rule":"max"})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"solar":{"loss":1.5}})") == Errc::config);
  CHECK(code("{" + inputs + R"(,"filter":{"urban_remove":[12]}})") == Errc::config);
  CHECK_FALSE(code("{" + inputs + R"(,"segmenters":["baseline","exec:/bin/true"],"vote_threshold":1,"cloud_rule":"combined"})"));
}

TEST_CASE("config hash ignores workers and output directory") {
  PipelineConfig a = parse_config(kMinimal, "/base");
  PipelineConfig b = a;
  b.workers = 4;
  b.output_dir = "/elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.solar.a_p = 30;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("pipeline run is deterministic across worker counts") {
  testutil::TempDir dir;
  const SyntheticWorld w = generate_world(small_spec(), dir.path());
  PipelineConfig cfg = load_config(w.config);
  cfg.output_dir = dir / "out1";
  cfg.workers = 1;
  const RunReport r1 = run_pipeline(cfg);
  cfg.output_dir = dir / "out4";
  cfg.workers = 4;
  const RunReport r4 = run_pipeline(cfg);
  CHECK(testutil::diff_trees(dir / "out1", dir / "out4").empty());
  CHECK(r1.config_hash == r4.config_hash);
  CHECK(r1.count("ok") == 4);
  CHECK(r1.exit_code() == 0);
  CHECK(r1.building_area_m2 == r4.building_area_m2);
  CHECK(r1.tiles == std::vector<std::string>{"0_30"});
  CHECK_FALSE(fs::exists(dir / "out1" / "work"));

  // Planted buildings are recovered, and the total area matches them.
  const auto rows = evaluate_dirs(dir / "out1" / "filtered", dir / "reference", std::nullopt);
  REQUIRE(rows.back().scope == "world");
  CHECK(*rows.back().f1 >= 0.95);
  CHECK(r1.building_area_m2 == doctest::Approx(w.building_area_m2).epsilon(0.05));

  for (const char* stage : {"mosaic", "labels_s0", "labels_s3", "vote", "filtered"}) {
    for (const GridCell& g : w.cells) CHECK(fs::exists(dir / "out1" / stage / (g.id() + ".tif")));
  }
  for (const char* f : {"tiles/0_30.tif", "density/0_30.tif", "solar/0_30.tif", "analytics/summary.json",
                        "analytics/zonal_area.csv", "analytics/regression.csv", "run_manifest.json"}) {
    CHECK(fs::exists(dir / "out1" / f));
  }
  const auto manifest = nlohmann::json::parse(testutil::slurp(dir / "out1" / "run_manifest.json"));
  CHECK(manifest.at("config_hash") == r1.config_hash);
  CHECK(manifest.at("cells").size() == 4);
}

TEST_CASE("failing cells are isolated") {
  testutil::TempDir dir;
  const SyntheticWorld w = generate_world(small_spec(), dir.path());
  PipelineConfig cfg = load_config(w.config);
  cfg.output_dir = dir / "clean";
  run_pipeline(cfg);

  // Corrupt the imagery of the second cell.
  const std::string bad_cell = w.cells[1].id();
  for (const auto& e : fs::directory_iterator(dir / "scenes")) {
    if (e.path().filename().string().starts_with(bad_cell)) testutil::spit(e.path(), "broken");
  }
  cfg.output_dir = dir / "broken";
  const RunReport r = run_pipeline(cfg);
  CHECK(r.count("failed") == 1);
  CHECK(r.count("ok") == 3);
  CHECK(r.exit_code() == 0);
  for (const GridCell& g : w.cells) {
    if (g.id() == bad_cell) {
      CHECK_FALSE(fs::exists(dir / "broken" / "filtered" / (g.id() + ".tif")));
      continue;
    }
    for (const char* stage : {"mosaic", "labels_s0", "vote", "filtered"}) {
      const fs::path rel = fs::path(stage) / (g.id() + ".tif");
      CHECK(testutil::slurp(dir / "clean" / rel) == testutil::slurp(dir / "broken" / rel));
    }
  }
  bool reported = false;
  for (const CellReport& c : r.cells) reported = reported || (c.status == "failed" && !c.error.empty());
  CHECK(reported);
}

TEST_CASE("empty cell list and empty world") {
  testutil::TempDir dir;
  const SyntheticWorld w = generate_world(small_spec(), dir.path());
  const RasterGrid s = read_raster(dir / "settlement.tif");
  write_raster(RasterGrid::filled(s.frame(), 1, DataType::u8, 0.0F), dir / "nobody.tif");
  PipelineConfig cfg = load_config(w.config);
  cfg.inputs.settlement = dir / "nobody.tif";
  cfg.output_dir = dir / "out";
  const RunReport r = run_pipeline(cfg);
  CHECK(r.cells.empty());
  CHECK(r.exit_code() == 0);
  std::vector<std::string> entries;
  for (const auto& e : fs::directory_iterator(dir / "out")) entries.push_back(e.path().filename().string());
  CHECK(entries == std::vector<std::string>{"run_manifest.json"});
  const auto m = nlohmann::json::parse(testutil::slurp(dir / "out" / "run_manifest.json"));
  CHECK(m.at("cells").empty());

  testutil::TempDir empty_dir;
  SyntheticWorldSpec none = small_spec();
  none.buildings_per_cell = 0;
  const SyntheticWorld e = generate_world(none, empty_dir.path());
  PipelineConfig ec = load_config(e.config);
  const RunReport er = run_pipeline(ec);
  CHECK(er.count("ok") == 4);
  CHECK(er.building_area_m2 == 0.0);
}

TEST_CASE("pipeline output equals chained stage commands") {
  testutil::TempDir dir;
  const SyntheticWorld w = generate_world(small_spec(), dir.path());
  REQUIRE(cli("run --config " + q(w.config)) == 0);
  // The first cell is covered by one clean scene.
  const GridCell g = w.cells[0];
  const std::string id = g.id();
  const fs::path scene = dir / "scenes" / (id + "_2019_a.tif");
  REQUIRE(fs::exists(scene));
  const fs::path h = dir / "hand";
  fs::create_directories(h);
  REQUIRE(cli("calibrate --in " + q(scene) + " --out " + q(h / "cal.tif")) == 0);
  REQUIRE(cli("infer --image " + q(h / "cal.tif") +
              " --segmenter baseline --segmenter baseline --segmenter baseline --segmenter baseline --out-dir " +
              q(h / "inf")) == 0);
  std::string masks;
  for (int k = 0; k < 4; ++k) {
    const fs::path lab = h / "inf" / ("labels_s" + std::to_string(k) + ".tif");
    const fs::path bin = h / ("b" + std::to_string(k) + ".tif");
    REQUIRE(cli("binarize --in " + q(lab) + " --out " + q(bin)) == 0);
    masks += " " + q(bin);
    CHECK(testutil::slurp(lab) == testutil::slurp(dir / "out" / ("labels_s" + std::to_string(k)) / (id + ".tif")));
  }
  REQUIRE(cli("vote --threshold 2 --out " + q(h / "vote.tif") + masks) == 0);
  REQUIRE(cli("filter --buildings " + q(h / "vote.tif") + " --urban " + q(dir / "urban.tif") + " --landcover " +
              q(dir / "landcover.tif") + " --out " + q(h / "filtered.tif")) == 0);
  CHECK(testutil::slurp(h / "cal.tif") == testutil::slurp(dir / "out" / "mosaic" / (id + ".tif")));
  CHECK(testutil::slurp(h / "vote.tif") == testutil::slurp(dir / "out" / "vote" / (id + ".tif")));
  CHECK(testutil::slurp(h / "filtered.tif") == testutil::slurp(dir / "out" / "filtered" / (id + ".tif")));
  // Four identical votes reproduce the single binarized mask.
  CHECK(testutil::slurp(h / "b0.tif") == testutil::slurp(h / "vote.tif"));
}

TEST_CASE("run exit codes") {
  testutil::TempDir dir;
  const SyntheticWorld w = generate_world(small_spec(), dir.path());
  const fs::path unknown = variant(w.config, "unknown.json", [](auto& j) { j["speed"] = "fast"; });
  CHECK(cli("run --config " + q(unknown)) == 2);
  CHECK(cli("run --config " + q(dir / "absent.json")) == 2);
  CHECK(cli("run --config " + q(w.config) + " --workers 0") == 2);
  const fs::path missing = variant(w.config, "missing.json", [](auto& j) { j["inputs"]["manifest"] = "nope.csv"; });
  CHECK(cli("run --config " + q(missing)) == 3);
  const fs::path failing = variant(w.config, "failing.json", [](auto& j) {
    j["segmenters"] = {"exec:false", "exec:false"};
    j["vote_threshold"] = 1;
    j["output_dir"] = "out_fail";
  });
  CHECK(cli("run --config " + q(failing)) == 4);
  const auto m = nlohmann::json::parse(testutil::slurp(dir / "out_fail" / "run_manifest.json"));
  CHECK(m.at("counts").at("failed") == 4);
  const fs::path w4 = variant(w.config, "w4.json", [](auto& j) { j["output_dir"] = "out4"; });
  CHECK(cli("run --config " + q(w.config)) == 0);
  CHECK(cli("run --config " + q(w4) + " --workers 4") == 0);
  CHECK(testutil::diff_trees(dir / "out", dir / "out4").empty());
  CHECK(cli("frobnicate") != 0);
}
