#include "gbm/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "gbm/analytics.hpp"
#include "gbm/csv.hpp"
#include "gbm/error.hpp"
#include "gbm/geometry.hpp"
#include "gbm/raster_io.hpp"
#include "gbm/scenes.hpp"

namespace gbm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCellsPerRow = 3;
constexpr int kEmptyCells = 2;
constexpr double kWorldWestLon = 30.0;
constexpr double kAtlasResDeg = 0.01;
constexpr double kRegionDeg = 0.1;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Distributions from <random> are implementation-defined, so draws are
// derived from the raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  int range(int lo, int hi) {
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

struct Rect {
  int row = 0, col = 0, h = 0, w = 0;
  bool contains(int r, int c) const { return r >= row && r < row + h && c >= col && c < col + w; }
  bool overlaps(const Rect& o, int gap) const {
    return row - gap < o.row + o.h && o.row < row + h + gap && col - gap < o.col + o.w &&
           o.col < col + w + gap;
  }
};

struct CellWorld {
  GridCell cell;
  int index = 0;
  int scenario = 0;
  Rect core;
  std::vector<Rect> buildings;
  std::vector<Rect> decoys;
  std::vector<std::uint8_t> mask;  // planted buildings, cell_pixels^2
  std::vector<float> image;        // 4 bands, band-sequential
};

std::string str(double v) { return csv::format_double(v); }

void place(Rng& rng, const SyntheticWorldSpec& spec, CellWorld& cw) {
  const int p = spec.cell_pixels;
  const int margin = 4;
  auto free_of = [&](const Rect& r) {
    for (const Rect& o : cw.buildings) {
      if (r.overlaps(o, 2)) return false;
    }
    for (const Rect& o : cw.decoys) {
      if (r.overlaps(o, 2)) return false;
    }
    return true;
  };
  auto random_rect = [&](int lo_px, int hi_px, bool in_core) {
    Rect r;
    r.h = 2 * rng.range(lo_px / 2, hi_px / 2);
    r.w = 2 * rng.range(lo_px / 2, hi_px / 2);
    const int r0 = in_core ? cw.core.row : margin;
    const int c0 = in_core ? cw.core.col : margin;
    const int r1 = in_core ? cw.core.row + cw.core.h : p - margin;
    const int c1 = in_core ? cw.core.col + cw.core.w : p - margin;
    r.row = 2 * rng.range(r0 / 2, (r1 - r.h) / 2);
    r.col = 2 * rng.range(c0 / 2, (c1 - r.w) / 2);
    return r;
  };
  for (int k = 0; k < spec.buildings_per_cell; ++k) {
    const bool in_core = rng.uniform() < 0.85;
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Rect r = random_rect(spec.min_building_px, spec.max_building_px, in_core);
      if (!in_core && r.overlaps(cw.core, 2)) continue;
      if (!free_of(r)) continue;
      cw.buildings.push_back(r);
      break;
    }
  }
  for (int k = 0; k < spec.decoys_per_cell; ++k) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Rect r = random_rect(8, 16, false);
      if (r.overlaps(cw.core, 2) || !free_of(r)) continue;
      cw.decoys.push_back(r);
      break;
    }
  }
}

void paint(Rng& rng, const SyntheticWorldSpec& spec, CellWorld& cw) {
  const int p = spec.cell_pixels;
  const std::size_t n = static_cast<std::size_t>(p) * p;
  cw.mask.assign(n, 0);
  for (const Rect& r : cw.buildings) {
    for (int y = r.row; y < r.row + r.h; ++y) {
      for (int x = r.col; x < r.col + r.w; ++x) cw.mask[static_cast<std::size_t>(y) * p + x] = 1;
    }
  }
  std::vector<std::uint8_t> decoy(n, 0);
  for (const Rect& r : cw.decoys) {
    for (int y = r.row; y < r.row + r.h; ++y) {
      for (int x = r.col; x < r.col + r.w; ++x) decoy[static_cast<std::size_t>(y) * p + x] = 1;
    }
  }
  cw.image.assign(4 * n, 0.0F);
  auto u = [&](int lo, int hi) { return static_cast<float>(rng.range(lo, hi)); };
  for (std::size_t k = 0; k < n; ++k) {
    float rgb[3], nir;
    if (cw.mask[k]) {
      for (float& v : rgb) v = u(1500, 2000);
      nir = u(1200, 1400);
    } else if (decoy[k]) {
      for (float& v : rgb) v = u(1200, 1600);
      nir = u(1300, 1500);
    } else {
      const bool bright = rng.uniform() < spec.vegetation_fraction;
      for (float& v : rgb) v = bright ? u(95, 105) : u(1, 10);
      nir = u(2800, 3200);
    }
    for (int b = 0; b < 3; ++b) cw.image[static_cast<std::size_t>(b) * n + k] = rgb[b];
    cw.image[3 * n + k] = nir;
  }
}

// Overlays bright cloud blobs until the requested cover is reached; returns
// the cover in percent.
double add_clouds(Rng& rng, int p, double fraction, std::vector<float>& image) {
  const std::size_t n = static_cast<std::size_t>(p) * p;
  std::vector<std::uint8_t> cloud(n, 0);
  std::size_t covered = 0;
  while (static_cast<double>(covered) < fraction * static_cast<double>(n)) {
    const int h = rng.range(p / 16, p / 5), w = rng.range(p / 16, p / 5);
    const int r0 = rng.range(0, p - h), c0 = rng.range(0, p - w);
    for (int y = r0; y < r0 + h; ++y) {
      for (int x = c0; x < c0 + w; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * p + x;
        if (cloud[k]) continue;
        cloud[k] = 1;
        ++covered;
        for (int b = 0; b < 4; ++b) {
          image[static_cast<std::size_t>(b) * n + k] = static_cast<float>(rng.range(3000, 3500));
        }
      }
    }
  }
  return std::round(100.0 * static_cast<double>(covered) / static_cast<double>(n));
}

RasterGrid scene_raster(const RasterFrame& frame, std::vector<float> values) {
  return RasterGrid(frame, 4, DataType::u16, std::move(values), 0.0F);
}

// Columns [0, width) of a band-sequential image.
std::vector<float> west_part(const std::vector<float>& img, int p, int width) {
  std::vector<float> out;
  out.reserve(4 * static_cast<std::size_t>(p) * width);
  for (int b = 0; b < 4; ++b) {
    for (int y = 0; y < p; ++y) {
      const auto* row = img.data() + (static_cast<std::size_t>(b) * p + y) * p;
      out.insert(out.end(), row, row + width);
    }
  }
  return out;
}

std::vector<float> downsample2(const std::vector<float>& img, int p) {
  const int q = p / 2;
  std::vector<float> out(4 * static_cast<std::size_t>(q) * q);
  for (int b = 0; b < 4; ++b) {
    for (int y = 0; y < q; ++y) {
      for (int x = 0; x < q; ++x) {
        out[(static_cast<std::size_t>(b) * q + y) * q + x] =
            img[(static_cast<std::size_t>(b) * p + 2 * y) * p + 2 * x];
      }
    }
  }
  return out;
}

}  // namespace

void SyntheticWorldSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::invalid_argument, "fixture spec: " + m); };
  if (n_cells < 0) bad("n_cells must be >= 0");
  if (buildings_per_cell < 0 || decoys_per_cell < 0) bad("counts must be >= 0");
  if (cell_pixels < 64 || cell_pixels % 32 != 0) bad("cell_pixels must be a multiple of 32, >= 64");
  if (min_building_px < 2 || max_building_px < min_building_px ||
      max_building_px > cell_pixels / 8) {
    bad("building size range must satisfy 2 <= min <= max <= cell_pixels / 8");
  }
  if (!(vegetation_fraction >= 0.0 && vegetation_fraction <= 0.65)) {
    bad("vegetation_fraction must be in [0, 0.65]");
  }
  if (!(cloud_scene_fraction >= 0.1 && cloud_scene_fraction <= 0.9)) {
    bad("cloud_scene_fraction must be in [0.1, 0.9]");
  }
}

SyntheticWorld generate_world(const SyntheticWorldSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const int p = spec.cell_pixels;
  const double res = spec.resolution_deg();
  const int total = spec.n_cells + kEmptyCells;
  const int rows = (total + kCellsPerRow - 1) / kCellsPerRow;
  const int i0 = static_cast<int>(std::lround((kWorldWestLon + 180.0) * kCellsPerDegree));
  const int j0 = 90 * kCellsPerDegree - rows;
  const GeoBox nw = GridCell{i0, j0}.bbox();
  const GeoTransform world_t{nw.min_lon, nw.max_lat, res, res};
  const RasterFrame world{world_t, kCellsPerRow * p, rows * p};

  fs::create_directories(out_dir / "scenes");
  fs::create_directories(out_dir / "reference");

  SyntheticWorld result;
  std::vector<SceneRecord> manifest;
  std::vector<std::uint8_t> world_mask(static_cast<std::size_t>(world.width) * world.height, 0);
  std::vector<float> landcover(world_mask.size() / 4, 2.0F);
  std::vector<float> urban(world_mask.size() / 4, 0.0F);
  std::vector<float> settlement(world_mask.size() / 16, 0.0F);
  const int lw = world.width / 2, sw = world.width / 4;
  PolygonSet building_polys;
  json cells_json = json::array();

  for (int pos = 0; pos < rows * kCellsPerRow; ++pos) {
    const int prow = pos / kCellsPerRow, pcol = pos % kCellsPerRow;
    const int oy = prow * p, ox = pcol * p;
    if (pos >= spec.n_cells) {
      // Empty cell: forest with a water strip along its southern edge.
      for (int y = oy / 2 + 3 * p / 8; y < (oy + p) / 2; ++y) {
        for (int x = ox / 2; x < (ox + p) / 2; ++x) landcover[static_cast<std::size_t>(y) * lw + x] = 5.0F;
      }
      continue;
    }
    CellWorld cw;
    cw.cell = GridCell{i0 + pcol, j0 + prow};
    cw.index = pos;
    cw.scenario = pos % 4;
    cw.core = Rect{p / 8, p / 8, 3 * p / 4, 3 * p / 4};
    Rng rng(mix(spec.seed ^ mix(static_cast<std::uint64_t>(pos) + 1)));
    place(rng, spec, cw);
    paint(rng, spec, cw);

    const std::string id = cw.cell.id();
    const GeoBox box = cw.cell.bbox();
    const RasterFrame frame{GeoTransform{box.min_lon, box.max_lat, res, res}, p, p};

    // Coarse layers; 2x2 and 4x4 blocks align with the even building grid.
    for (int y = 0; y < p / 2; ++y) {
      for (int x = 0; x < p / 2; ++x) {
        const bool in_core = cw.core.contains(2 * y, 2 * x);
        const std::size_t k = static_cast<std::size_t>(oy / 2 + y) * lw + (ox / 2 + x);
        urban[k] = in_core ? 1.0F : 0.0F;
        landcover[k] = in_core ? 3.0F : ((x / 32 + y / 32) % 2 == 0 ? 1.0F : 2.0F);
      }
    }
    auto stamp_lc = [&](const Rect& r, float cls) {
      for (int y = r.row / 2; y < (r.row + r.h) / 2; ++y) {
        for (int x = r.col / 2; x < (r.col + r.w) / 2; ++x) {
          landcover[static_cast<std::size_t>(oy / 2 + y) * lw + (ox / 2 + x)] = cls;
        }
      }
    };
    for (const Rect& r : cw.buildings) stamp_lc(r, 6.0F);
    for (const Rect& r : cw.decoys) stamp_lc(r, 7.0F);
    for (int y = 0; y < p / 4; ++y) {
      for (int x = 0; x < p / 4; ++x) {
        bool built = cw.core.contains(4 * y, 4 * x);
        for (int dy = 0; dy < 4 && !built; ++dy) {
          for (int dx = 0; dx < 4 && !built; ++dx) {
            built = cw.mask[static_cast<std::size_t>(4 * y + dy) * p + 4 * x + dx] != 0;
          }
        }
        if (built) settlement[static_cast<std::size_t>(oy / 4 + y) * sw + (ox / 4 + x)] = 1.0F;
      }
    }
    std::int64_t planted = 0;
    for (int y = 0; y < p; ++y) {
      for (int x = 0; x < p; ++x) {
        const std::uint8_t m = cw.mask[static_cast<std::size_t>(y) * p + x];
        world_mask[static_cast<std::size_t>(oy + y) * world.width + ox + x] = m;
        planted += m;
      }
    }

    std::vector<float> ref(cw.mask.begin(), cw.mask.end());
    write_raster(RasterGrid(frame, 1, DataType::u8, std::move(ref)), out_dir / "reference" / (id + ".tif"));

    for (std::size_t k = 0; k < cw.buildings.size(); ++k) {
      const Rect& r = cw.buildings[k];
      const double lon0 = box.min_lon + r.col * res, lon1 = box.min_lon + (r.col + r.w) * res;
      const double lat0 = box.max_lat - (r.row + r.h) * res, lat1 = box.max_lat - r.row * res;
      Polygon poly;
      poly.id = id + "_b" + std::to_string(k);
      poly.rings.push_back({{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}, {lon0, lat0}});
      building_polys.polygons.push_back(std::move(poly));
    }

    // Scenes for this cell's scenario.
    auto emit = [&](const std::string& sid, const RasterGrid& r, double cloud, double haze, int year,
                    SceneKind kind) {
      const fs::path rel = fs::path("scenes") / (sid + ".tif");
      write_raster(r, out_dir / rel);
      manifest.push_back(SceneRecord{sid, r.extent(), cloud, haze, year, kind, rel});
    };
    auto cloudy = [&]() {
      std::vector<float> img = cw.image;
      const double pct = add_clouds(rng, p, spec.cloud_scene_fraction, img);
      return std::make_pair(scene_raster(frame, std::move(img)), pct);
    };
    switch (cw.scenario) {
      case 0: {
        emit(id + "_2019_a", scene_raster(frame, cw.image), 2, 1, 2019, SceneKind::surface_reflectance);
        const auto [c, pct] = cloudy();
        emit(id + "_2019_b", c, pct, 3, 2019, SceneKind::surface_reflectance);
        break;
      }
      case 1: {
        const auto [c, pct] = cloudy();
        emit(id + "_2019_a", c, pct, 2, 2019, SceneKind::surface_reflectance);
        emit(id + "_2018_a", scene_raster(frame, cw.image), 3, 2, 2018, SceneKind::surface_reflectance);
        break;
      }
      case 2: {
        const int west = 2 * static_cast<int>(std::lround(0.3 * p));
        RasterFrame wf = frame;
        wf.width = west;
        emit(id + "_2019_w", scene_raster(wf, west_part(cw.image, p, west)), 1, 1, 2019,
             SceneKind::surface_reflectance);
        emit(id + "_2018_a", scene_raster(frame, cw.image), 4, 2, 2018, SceneKind::surface_reflectance);
        break;
      }
      default: {
        const auto [c19, pct19] = cloudy();
        emit(id + "_2019_a", c19, pct19, 4, 2019, SceneKind::surface_reflectance);
        const auto [c18, pct18] = cloudy();
        emit(id + "_2018_a", c18, 3, std::max(30.0, pct18), 2018, SceneKind::surface_reflectance);
        RasterFrame bf{GeoTransform{box.min_lon, box.max_lat, 2 * res, 2 * res}, p / 2, p / 2};
        emit(id + "_basemap", scene_raster(bf, downsample2(cw.image, p)), 0, 0, 2019, SceneKind::basemap);
        break;
      }
    }

    result.cells.push_back(cw.cell);
    result.building_pixels[id] = planted;
    cells_json.push_back({{"cell", id},
                          {"scenario", cw.scenario},
                          {"buildings", cw.buildings.size()},
                          {"decoys", cw.decoys.size()},
                          {"building_pixels", planted}});
  }

  const RasterFrame lf{GeoTransform{world_t.origin_lon, world_t.origin_lat, 2 * res, 2 * res},
                       lw, world.height / 2};
  const RasterFrame sf{GeoTransform{world_t.origin_lon, world_t.origin_lat, 4 * res, 4 * res},
                       sw, world.height / 4};
  write_raster(RasterGrid(lf, 1, DataType::u8, std::move(landcover)), out_dir / "landcover.tif");
  write_raster(RasterGrid(lf, 1, DataType::u8, std::move(urban)), out_dir / "urban.tif");
  write_raster(RasterGrid(sf, 1, DataType::u8, std::move(settlement)), out_dir / "settlement.tif");

  // PV atlas with two constant latitude bands.
  const GeoBox extent = world.extent();
  const int aw = static_cast<int>(std::lround(extent.width() / kAtlasResDeg));
  const int ah = static_cast<int>(std::lround(extent.height() / kAtlasResDeg));
  std::vector<float> pv(static_cast<std::size_t>(aw) * ah);
  for (int y = 0; y < ah; ++y) {
    std::fill_n(pv.begin() + static_cast<std::ptrdiff_t>(y) * aw, aw, y < ah / 2 ? 5.0F : 4.5F);
  }
  write_raster(RasterGrid(RasterFrame{GeoTransform{extent.min_lon, extent.max_lat, kAtlasResDeg,
                                                   kAtlasResDeg},
                                      aw, ah},
                          1, DataType::f32, std::move(pv), kAnalyticsNodata),
               out_dir / "pv_atlas.tif");

  write_geojson(building_polys, out_dir / "buildings.geojson");

  // Regions on a 0.1 degree grid with edges on the pixel lattice.
  const int region_px = static_cast<int>(std::lround(kRegionDeg / res));
  const int rcols = world.width / region_px, rrows = world.height / region_px;
  PolygonSet regions;
  for (int ry = 0; ry < rrows; ++ry) {
    for (int rx = 0; rx < rcols; ++rx) {
      const double lon0 = world_t.origin_lon + rx * region_px * res;
      const double lon1 = world_t.origin_lon + (rx + 1) * region_px * res;
      const double lat1 = world_t.origin_lat - ry * region_px * res;
      const double lat0 = world_t.origin_lat - (ry + 1) * region_px * res;
      char rid[16];
      std::snprintf(rid, sizeof rid, "R%02d", ry * rcols + rx);
      Polygon poly;
      poly.id = rid;
      poly.rings.push_back({{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}, {lon0, lat0}});
      regions.polygons.push_back(std::move(poly));
    }
  }
  write_geojson(regions, out_dir / "regions.geojson");

  // Socioeconomic table: y = 3 * planted area + gaussian noise.
  std::vector<float> wm(world_mask.begin(), world_mask.end());
  const RasterGrid world_ref(world, 1, DataType::u8, std::move(wm));
  result.building_area_m2 = building_area(world_ref);
  std::vector<RegionStats> zonal = zonal_building_area(world_ref, regions);
  zonal.pop_back();  // unassigned
  double mean = 0.0;
  for (const RegionStats& s : zonal) mean += s.building_area_m2;
  mean /= static_cast<double>(std::max<std::size_t>(1, zonal.size()));
  const double sigma = 0.005 * 3.0 * mean;
  Rng noise(mix(spec.seed ^ 0x50C10ULL));
  {
    std::ofstream out(out_dir / "socioeconomic.csv");
    if (!out) throw Error(Errc::io, "cannot create socioeconomic.csv");
    out << "region_id";
    for (std::string_view v : kSocioVariables) out << ',' << v;
    out << '\n';
    for (std::size_t r = 0; r < zonal.size(); ++r) {
      out << zonal[r].region_id;
      for (std::size_t v = 0; v < kSocioVariables.size(); ++v) {
        const double y = 3.0 * zonal[r].building_area_m2 + sigma * noise.normal();
        const bool blank = (r == 3 && v == 4) || (r == 7 && v == 5);
        out << ',' << (blank ? std::string() : str(y));
      }
      out << '\n';
    }
  }

  {
    std::ofstream out(out_dir / "groups.csv");
    out << "patch_id,city,continent\n";
    for (std::size_t k = 0; k < result.cells.size(); ++k) {
      out << result.cells[k].id() << ",city" << k / 2 << ",africa\n";
    }
  }

  // Manifest order is fixed by generation order.
  write_scene_manifest(manifest, out_dir / "manifest.csv");

  const json config{
      {"resolution_deg", res},
      {"seed", spec.seed},
      {"workers", 1},
      {"segmenters", {"baseline", "baseline", "baseline", "baseline"}},
      {"inputs",
       {{"manifest", "manifest.csv"},
        {"settlement", "settlement.tif"},
        {"landcover", "landcover.tif"},
        {"urban", "urban.tif"},
        {"polygons", "buildings.geojson"},
        {"regions", "regions.geojson"},
        {"pv_atlas", "pv_atlas.tif"},
        {"socioeconomic", "socioeconomic.csv"}}},
      {"output_dir", "out"},
  };
  result.config = out_dir / "config.json";
  {
    std::ofstream out(result.config);
    out << config.dump(2) << '\n';
  }
  {
    const json fixture{
        {"seed", spec.seed},
        {"spec",
         {{"n_cells", spec.n_cells},
          {"buildings_per_cell", spec.buildings_per_cell},
          {"building_size_range", {spec.min_building_px, spec.max_building_px}},
          {"vegetation_fraction", spec.vegetation_fraction},
          {"cloud_scene_fraction", spec.cloud_scene_fraction},
          {"decoys_per_cell", spec.decoys_per_cell},
          {"cell_pixels", spec.cell_pixels}}},
        {"resolution_deg", res},
        {"extent", {extent.min_lon, extent.min_lat, extent.max_lon, extent.max_lat}},
        {"cells", cells_json},
        {"building_area_m2", result.building_area_m2},
        {"layout",
         {{"scenes/", "4-band uint16 scenes (R, G, B, NIR), listed in manifest.csv"},
          {"reference/", "planted building masks per cell, {j}_{i}.tif"},
          {"settlement.tif", "built-up mask at 4x the scene pixel size"},
          {"urban.tif", "urban mask at 2x the scene pixel size"},
          {"landcover.tif", "9-class land cover at 2x the scene pixel size"},
          {"pv_atlas.tif", "PV potential, kWh/kWp/day, 0.01 degree pixels"},
          {"buildings.geojson", "planted building footprints"},
          {"regions.geojson", "0.1 degree regions R00.."},
          {"socioeconomic.csv", "y = 3 * planted area + noise per region"},
          {"groups.csv", "city and continent per cell"},
          {"config.json", "pipeline config for this world"}}},
    };
    std::ofstream out(out_dir / "fixture.json");
    out << fixture.dump(2) << '\n';
  }
  return result;
}

}  // namespace gbm
