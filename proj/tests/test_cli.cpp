#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "gbm/analytics.hpp"
#include "gbm/coregister.hpp"
#include "gbm/fixtures.hpp"
#include "gbm/labelgen.hpp"
#include "gbm/raster_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(GBM_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int rc = ::pclose(p);
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("cli help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("--version").out.find("gbm") != std::string::npos);
  CHECK(run("").code != 0);
  CHECK(run("calibrate --in").code != 0);
  CHECK(run("calibrate --in /nonexistent.tif --out /tmp/x.tif").code == 3);
}

TEST_CASE("cli labelgen, cut-patches and coregister") {
  testutil::TempDir dir;
  const RasterFrame f = oracle::unit_frame(600, 520, 1e-4, 10.0, 1.0);
  oracle::Rng rng(101);
  std::vector<float> img(static_cast<std::size_t>(600) * 520 * 3);
  for (auto& v : img) v = static_cast<float>(rng.range(0, 50));
  PolygonSet ps;
  for (int k = 0; k < 30; ++k) {
    const double x = 10.0 + rng.uniform(0.0, 0.055), y = 1.0 - rng.uniform(0.0, 0.047);
    ps.polygons.push_back(Polygon{{{{x, y}, {x + 0.0015, y}, {x + 0.0015, y - 0.001}, {x, y - 0.001}, {x, y}}},
                                  "b" + std::to_string(k)});
  }
  const RasterGrid mask = rasterize(ps, f);
  // Buildings are bright in the image.
  for (int b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < mask.band_size(); ++k) {
      if (mask.band(0)[k] == 1.0F) img[b * mask.band_size() + k] = 200.0F;
    }
  }
  write_raster(RasterGrid(f, 3, DataType::u16, img), dir / "img.tif");
  write_geojson(ps, dir / "b.geojson");

  REQUIRE(run("labelgen --polygons " + q(dir / "b.geojson") + " --frame-like " + q(dir / "img.tif") +
              " --out " + q(dir / "labels.tif") + " --mask-out " + q(dir / "mask.tif"))
              .code == 0);
  const RasterGrid lab = read_raster(dir / "labels.tif");
  const RasterGrid expect = truncate_and_bin(signed_distance(mask));
  CHECK(lab.identical(expect));
  CHECK(read_raster(dir / "mask.tif").identical(mask));

  REQUIRE(run("cut-patches --image " + q(dir / "img.tif") + " --labels " + q(dir / "labels.tif") +
              " --seed 9 --out-dir " + q(dir / "patches"))
              .code == 0);
  const auto rows = lines(testutil::slurp(dir / "patches" / "manifest.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "patch_id,row,col,split");
  CHECK(rows[4].rfind("3,256,256,", 0) == 0);
  int val = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) val += rows[k].ends_with("validation") ? 1 : 0;
  CHECK(val <= 1);
  CHECK(read_raster(dir / "patches" / "image" / "3.tif").width() == 256);
  CHECK(read_raster(dir / "patches" / "labels" / "0.tif").bands() == 1);

  // Mask moved 4 east and 3 south: the estimate moves it back.
  write_raster(apply_shift(mask, Shift{4, 3}), dir / "moved.tif");
  REQUIRE(run("coregister --image " + q(dir / "img.tif") + " --mask " + q(dir / "moved.tif") + " --window 8 --out-shift " +
              q(dir / "shift.txt") + " --shifted-mask " + q(dir / "fixed.tif"))
              .code == 0);
  int dx = 0, dy = 0;
  std::istringstream(testutil::slurp(dir / "shift.txt")) >> dx >> dy;
  CHECK(dx == -4);
  CHECK(dy == -3);
  REQUIRE(fs::exists(dir / "fixed.tif"));
}

TEST_CASE("cli analytics and evaluation on a pipeline run") {
  testutil::TempDir dir;
  SyntheticWorldSpec spec;
  spec.seed = 5;
  spec.cell_pixels = 256;
  spec.buildings_per_cell = 25;
  REQUIRE(run("fixtures generate --seed 5 --cells 4 --buildings 25 --cell-pixels 256 --out " + q(dir.path())).code == 0);
  testutil::TempDir lib;
  const SyntheticWorld w = generate_world(spec, lib.path());
  CHECK(testutil::diff_trees(dir.path(), lib.path()).empty());
  REQUIRE(run("run --config " + q(dir / "config.json")).code == 0);
  const fs::path out = dir / "out";
  const fs::path tile = out / "tiles" / "0_30.tif";

  REQUIRE(run("density --in " + q(tile) + " --out " + q(dir / "d.tif") + " --cell-size 250").code == 0);
  CHECK(testutil::slurp(dir / "d.tif") == testutil::slurp(out / "density" / "0_30.tif"));
  REQUIRE(run("solar-map --buildings " + q(tile) + " --atlas " + q(dir / "pv_atlas.tif") + " --out " + q(dir / "s.tif")).code == 0);
  CHECK(testutil::slurp(dir / "s.tif") == testutil::slurp(out / "solar" / "0_30.tif"));

  const Result total = run("solar-total --area 9000 --pv 5");
  CHECK(std::stod(total.out) == doctest::Approx(1478250.0));
  const Result tile_total = run("solar-total --buildings " + q(tile) + " --atlas " + q(dir / "pv_atlas.tif"));
  REQUIRE(tile_total.code == 0);
  const RasterGrid mask = read_raster(tile);
  const RasterGrid atlas = read_raster(dir / "pv_atlas.tif");
  CHECK(std::stod(tile_total.out) == doctest::Approx(solar_potential_total(mask, &atlas, SolarParams{})).epsilon(1e-12));
  CHECK(run("solar-total --a-p 0 --area 1").code != 0);

  REQUIRE(run("zonal-area --buildings " + q(tile) + " --regions " + q(dir / "regions.geojson") + " --out " + q(dir / "z.csv")).code == 0);
  CHECK(testutil::slurp(dir / "z.csv") == testutil::slurp(out / "analytics" / "zonal_area.csv"));
  REQUIRE(run("regress --zonal " + q(dir / "z.csv") + " --socio " + q(dir / "socioeconomic.csv") + " --out " + q(dir / "r.csv")).code == 0);
  CHECK(testutil::slurp(dir / "r.csv") == testutil::slurp(out / "analytics" / "regression.csv"));

  REQUIRE(run("evaluate --pred-dir " + q(out / "filtered") + " --ref-dir " + q(dir / "reference") + " --out " +
              q(dir / "scores.csv"))
              .code == 0);
  const auto rows = lines(testutil::slurp(dir / "scores.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows.back().rfind("world,world,4,", 0) == 0);

  // Mosaic of the four filtered cells onto their joint extent equals the tile.
  std::string inputs;
  for (const GridCell& g : w.cells) inputs += " " + q(out / "filtered" / (g.id() + ".tif"));
  REQUIRE(run("mosaic --out " + q(dir / "m.tif") + inputs).code == 0);
  CHECK(read_raster(dir / "m.tif").band_size() == mask.band_size());
}
