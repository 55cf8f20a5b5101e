#include "gbm/pipeline.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gbm/ensemble.hpp"
#include "gbm/error.hpp"
#include "gbm/geometry.hpp"
#include "gbm/raster_io.hpp"

namespace gbm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(Errc::config, msg); }

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (std::string_view k : known) ok = ok || key == k;
    if (!ok) config_error("unknown key '" + where + key + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_relative() ? base / path : path).lexically_normal();
}

std::set<int> class_set(const json& j, const std::string& name) {
  if (!j.is_array()) config_error(name + " must be an array of classes");
  std::set<int> out;
  for (const auto& v : j) {
    const int c = v.get<int>();
    if (c < kCropland || c > kCloud) config_error(name + ": class outside 1..9");
    out.insert(c);
  }
  return out;
}

json to_json(const PipelineConfig& c) {
  auto opt = [](const std::optional<fs::path>& p) {
    return p ? json(p->generic_string()) : json(nullptr);
  };
  return json{
      {"grid_size_deg", c.grid_size_deg},
      {"tile_size_deg", c.tile_size_deg},
      {"vote_threshold", c.vote_threshold},
      {"segmenters", c.segmenters},
      {"calibration_mode", calibration_mode_name(c.calibration_mode)},
      {"filter",
       {{"urban_remove", c.filter.urban_remove}, {"nonurban_keep", c.filter.nonurban_keep}}},
      {"solar",
       {{"a_p", c.solar.a_p},
        {"loss", c.solar.loss},
        {"n_days", c.solar.n_days},
        {"pv_default", c.solar.pv_default},
        {"atlas_lat_min", c.solar.atlas_lat_min},
        {"atlas_lat_max", c.solar.atlas_lat_max}}},
      {"seed", c.seed},
      {"resolution_deg", c.resolution_deg},
      {"coverage_threshold", c.coverage_threshold},
      {"cloud_rule", cloud_rule_name(c.cloud_rule)},
      {"max_cloud_pct", c.max_cloud_pct},
      {"density_cell_m", c.density_cell_m},
      {"inputs",
       {{"manifest", c.inputs.manifest.generic_string()},
        {"settlement", c.inputs.settlement.generic_string()},
        {"landcover", c.inputs.landcover.generic_string()},
        {"urban", c.inputs.urban.generic_string()},
        {"polygons", opt(c.inputs.polygons)},
        {"regions", opt(c.inputs.regions)},
        {"pv_atlas", opt(c.inputs.pv_atlas)},
        {"socioeconomic", opt(c.inputs.socioeconomic)}}},
  };
}

}  // namespace

void PipelineConfig::validate() const {
  if (grid_size_deg != kGridCellDeg) config_error("grid_size_deg must be 0.2");
  if (tile_size_deg != kTileDeg) config_error("tile_size_deg must be 5");
  if (segmenters.empty()) config_error("at least one segmenter is required");
  if (vote_threshold < 1 || vote_threshold > static_cast<int>(segmenters.size())) {
    config_error("vote_threshold must be in [1, number of segmenters]");
  }
  if (workers < 1) config_error("workers must be at least 1");
  for (const std::string& s : segmenters) {
    if (s != "baseline" && !(s.starts_with("exec:") && s.size() > 5)) {
      config_error("unknown segmenter '" + s + "'");
    }
  }
  if (!(resolution_deg > 0.0) || resolution_deg > grid_size_deg) {
    config_error("resolution_deg must be in (0, grid_size_deg]");
  }
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) {
    config_error("coverage_threshold must be in (0, 1]");
  }
  if (!(max_cloud_pct > 0.0 && max_cloud_pct <= 100.0)) {
    config_error("max_cloud_pct must be in (0, 100]");
  }
  if (!(density_cell_m > 0.0)) config_error("density_cell_m must be positive");
  try {
    solar.validate();
  } catch (const Error& e) {
    config_error(std::string("solar: ") + e.what());
  }
  if (inputs.manifest.empty() || inputs.settlement.empty() || inputs.landcover.empty() ||
      inputs.urban.empty()) {
    config_error("inputs.manifest, settlement, landcover and urban are required");
  }
}

SceneQuery PipelineConfig::scene_query() const {
  SceneQuery q;
  q.max_cloud_pct = max_cloud_pct;
  q.cloud_rule = cloud_rule;
  q.coverage_threshold = coverage_threshold;
  return q;
}

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    const json j = json::parse(json_text);
    reject_unknown(j,
                   {"grid_size_deg", "tile_size_deg", "vote_threshold", "workers", "segmenters",
                    "calibration_mode", "filter", "solar", "seed", "resolution_deg",
                    "coverage_threshold", "cloud_rule", "max_cloud_pct", "density_cell_m",
                    "inputs", "output_dir"},
                   "");
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("grid_size_deg", c.grid_size_deg);
    get("tile_size_deg", c.tile_size_deg);
    get("vote_threshold", c.vote_threshold);
    get("workers", c.workers);
    get("segmenters", c.segmenters);
    get("seed", c.seed);
    get("resolution_deg", c.resolution_deg);
    get("coverage_threshold", c.coverage_threshold);
    get("max_cloud_pct", c.max_cloud_pct);
    get("density_cell_m", c.density_cell_m);
    if (j.contains("calibration_mode")) {
      c.calibration_mode = parse_calibration_mode(j.at("calibration_mode").get<std::string>());
    }
    if (j.contains("cloud_rule")) c.cloud_rule = parse_cloud_rule(j.at("cloud_rule").get<std::string>());
    if (j.contains("filter")) {
      const json& f = j.at("filter");
      reject_unknown(f, {"urban_remove", "nonurban_keep"}, "filter.");
      if (f.contains("urban_remove")) c.filter.urban_remove = class_set(f.at("urban_remove"), "urban_remove");
      if (f.contains("nonurban_keep")) c.filter.nonurban_keep = class_set(f.at("nonurban_keep"), "nonurban_keep");
    }
    if (j.contains("solar")) {
      const json& s = j.at("solar");
      reject_unknown(s, {"a_p", "loss", "n_days", "pv_default", "atlas_lat_min", "atlas_lat_max"},
                     "solar.");
      auto sget = [&](const char* key, double& field) {
        if (s.contains(key)) field = s.at(key).get<double>();
      };
      sget("a_p", c.solar.a_p);
      sget("loss", c.solar.loss);
      sget("n_days", c.solar.n_days);
      sget("pv_default", c.solar.pv_default);
      sget("atlas_lat_min", c.solar.atlas_lat_min);
      sget("atlas_lat_max", c.solar.atlas_lat_max);
    }
    if (!j.contains("inputs")) config_error("missing 'inputs'");
    const json& in = j.at("inputs");
    reject_unknown(in,
                   {"manifest", "settlement", "landcover", "urban", "polygons", "regions",
                    "pv_atlas", "socioeconomic"},
                   "inputs.");
    auto req = [&](const char* key) {
      if (!in.contains(key)) config_error(std::string("missing inputs.") + key);
      return resolve(base_dir, in.at(key).get<std::string>());
    };
    auto opt = [&](const char* key) -> std::optional<fs::path> {
      if (!in.contains(key) || in.at(key).is_null()) return std::nullopt;
      return resolve(base_dir, in.at(key).get<std::string>());
    };
    c.inputs.manifest = req("manifest");
    c.inputs.settlement = req("settlement");
    c.inputs.landcover = req("landcover");
    c.inputs.urban = req("urban");
    c.inputs.polygons = opt("polygons");
    c.inputs.regions = opt("regions");
    c.inputs.pv_atlas = opt("pv_atlas");
    c.inputs.socioeconomic = opt("socioeconomic");
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
  } catch (const json::exception& e) {
    config_error(e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::config) throw;
    config_error(e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_hash(const PipelineConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void run_round_robin(std::size_t n, int workers, const std::function<void(std::size_t)>& item) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    for (std::size_t t = 0; t < n; ++t) item(t);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(w, n); ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t t = k; t < n; t += w) item(t);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t RunReport::count(std::string_view status) const {
  std::size_t n = 0;
  for (const CellReport& c : cells) n += c.status == status ? 1 : 0;
  return n;
}

int RunReport::exit_code() const {
  return count("failed") > 0 && count("ok") == 0 ? 4 : 0;
}

namespace {

struct CellState {
  CellReport report;
  RasterFrame frame;
  RasterGrid mosaic;
  std::vector<RasterGrid> labels;
  std::vector<std::string> label_errors;
  RasterGrid filtered;
  bool failed = false;

  void fail(const std::string& msg) {
    if (!failed) report.error = msg;
    failed = true;
  }
};

fs::path artifact(const fs::path& out, const std::string& stage, const std::string& id) {
  return out / stage / (id + ".tif");
}

void write_json(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << j.dump(2) << '\n';
}

RasterGrid prepare_mosaic(const SceneSelection& sel, const RasterFrame& frame,
                          const GeoBox& box, CalibrationMode mode) {
  std::vector<RasterGrid> calibrated;
  for (const SceneRecord& s : sel.scenes) {
    RasterGrid cropped = crop_window(read_raster(s.path), box);
    try {
      calibrated.push_back(calibrate(cropped, mode));
    } catch (const Error& e) {
      if (e.code() != Errc::all_nodata) throw;
    }
  }
  if (calibrated.empty()) throw Error(Errc::all_nodata, "selected scenes hold no valid pixels");
  return mosaic_onto(calibrated, frame);
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  const fs::path out = config.output_dir;
  fs::create_directories(out);

  const std::vector<SceneRecord> manifest = read_scene_manifest(config.inputs.manifest);
  const RasterGrid settlement = read_raster(config.inputs.settlement);
  const RasterGrid urban = read_raster(config.inputs.urban);
  const RasterGrid landcover = read_raster(config.inputs.landcover);
  std::optional<RasterGrid> atlas;
  if (config.inputs.pv_atlas) atlas = read_raster(*config.inputs.pv_atlas);
  std::optional<PolygonSet> regions;
  if (config.inputs.regions) regions = read_geojson(*config.inputs.regions);
  std::optional<std::map<std::string, std::map<std::string, std::optional<double>>>> socio;
  if (config.inputs.socioeconomic) socio = read_socioeconomic_csv(*config.inputs.socioeconomic);

  const fs::path work = out / "work";
  std::vector<std::shared_ptr<const Segmenter>> segmenters;
  for (const std::string& spec : config.segmenters) segmenters.push_back(make_segmenter(spec, work));

  RunReport report;
  report.config_hash = config_hash(config);
  const SceneQuery query = config.scene_query();

  std::vector<CellState> cells;
  for (const GridCell& g : select_cells(settlement)) {
    CellState s;
    s.report.cell = g;
    s.frame = RasterFrame::for_box(g.bbox(), config.resolution_deg);
    s.labels.resize(segmenters.size());
    s.label_errors.resize(segmenters.size());
    cells.push_back(std::move(s));
  }

  // Scene selection, calibration and mosaicking per cell.
  run_round_robin(cells.size(), config.workers, [&](std::size_t t) {
    CellState& s = cells[t];
    const std::string id = s.report.cell.id();
    try {
      const SceneSelection sel = select_scenes(manifest, s.report.cell, query);
      s.report.coverage = sel.coverage;
      for (const SceneRecord& r : sel.scenes) s.report.scenes.push_back(r.scene_id);
      if (sel.skipped()) {
        s.report.status = "skipped";
        return;
      }
      s.mosaic = prepare_mosaic(sel, s.frame, s.report.cell.bbox(), config.calibration_mode);
      write_raster(s.mosaic, artifact(out, "mosaic", id));
    } catch (const std::exception& e) {
      s.fail(e.what());
    }
  });

  // Inference: one item per (cell, segmenter) pair.
  const std::size_t n_seg = segmenters.size();
  run_round_robin(cells.size() * n_seg, config.workers, [&](std::size_t t) {
    CellState& s = cells[t / n_seg];
    const std::size_t k = t % n_seg;
    if (s.failed || s.report.status == "skipped") return;
    try {
      RasterGrid labels = segmenters[k]->segment(s.mosaic);
      check_label_raster(labels, s.mosaic);
      write_raster(labels, artifact(out, "labels_s" + std::to_string(k), s.report.cell.id()));
      s.labels[k] = std::move(labels);
    } catch (const std::exception& e) {
      s.label_errors[k] = segmenters[k]->id() + ": " + e.what();
    }
  });

  // Vote and filter.
  run_round_robin(cells.size(), config.workers, [&](std::size_t t) {
    CellState& s = cells[t];
    if (s.failed || s.report.status == "skipped") return;
    const std::string id = s.report.cell.id();
    try {
      std::string errors;
      for (const std::string& e : s.label_errors) {
        if (!e.empty()) errors += (errors.empty() ? "" : "; ") + e;
      }
      if (!errors.empty()) throw Error(Errc::external_process, errors);
      std::vector<RasterGrid> masks;
      for (const RasterGrid& l : s.labels) masks.push_back(binarize(l));
      const RasterGrid vote = majority_vote(masks, config.vote_threshold);
      write_raster(vote, artifact(out, "vote", id));
      s.filtered = area_aware_filter(vote, align_to(urban, s.frame), align_to(landcover, s.frame),
                                     config.filter);
      write_raster(s.filtered, artifact(out, "filtered", id));
      s.report.status = "ok";
    } catch (const std::exception& e) {
      s.fail(e.what());
    }
    s.labels.clear();
    s.mosaic = RasterGrid();
  });
  for (CellState& s : cells) {
    if (s.failed) s.report.status = "failed";
  }

  // Tiling and analytics, single-threaded over the finished cells.
  std::map<TileSpec, std::vector<const CellState*>> by_tile;
  for (const CellState& s : cells) {
    if (s.report.status != "ok") continue;
    const GeoBox b = s.report.cell.bbox();
    by_tile[TileSpec::containing(0.5 * (b.min_lon + b.max_lon), 0.5 * (b.min_lat + b.max_lat))]
        .push_back(&s);
  }
  std::map<std::string, double> zonal;
  json tiles_json = json::array();
  for (const auto& [tile, members] : by_tile) {
    GeoBox box = members.front()->report.cell.bbox();
    std::vector<RasterGrid> parts;
    for (const CellState* s : members) {
      const GeoBox b = s->report.cell.bbox();
      box = GeoBox{std::min(box.min_lon, b.min_lon), std::min(box.min_lat, b.min_lat),
                   std::max(box.max_lon, b.max_lon), std::max(box.max_lat, b.max_lat)};
      parts.push_back(s->filtered);
    }
    const RasterGrid mask = mosaic_onto(parts, RasterFrame::for_box(box, config.resolution_deg));
    const std::string id = tile.id();
    write_raster(mask, artifact(out, "tiles", id));
    write_raster(density_map(mask, config.density_cell_m), artifact(out, "density", id));
    const RasterGrid* pv = atlas ? &*atlas : nullptr;
    write_raster(solar_potential_map(mask, pv, config.solar, config.density_cell_m),
                 artifact(out, "solar", id));
    const double area = building_area(mask);
    const double solar = solar_potential_total(mask, pv, config.solar, config.density_cell_m);
    report.building_area_m2 += area;
    report.solar_potential_kwh += solar;
    report.tiles.push_back(id);
    tiles_json.push_back({{"tile", id},
                          {"cells", members.size()},
                          {"building_area_m2", area},
                          {"solar_potential_kwh", solar}});
    if (regions) {
      for (const RegionStats& r : zonal_building_area(mask, *regions)) {
        zonal[r.region_id] += r.building_area_m2;
      }
    }
  }

  if (!by_tile.empty()) {
    write_json({{"config_hash", report.config_hash},
                {"building_area_m2", report.building_area_m2},
                {"solar_potential_kwh", report.solar_potential_kwh},
                {"tiles", tiles_json}},
               out / "analytics" / "summary.json");
    if (regions) {
      std::vector<RegionStats> stats;
      for (const auto& [id, area] : zonal) {
        if (id != kUnassignedRegion) stats.push_back(RegionStats{id, area, {}});
      }
      stats.push_back(RegionStats{std::string(kUnassignedRegion), zonal[std::string(kUnassignedRegion)], {}});
      write_zonal_csv(stats, out / "analytics" / "zonal_area.csv");
      if (socio) write_regression_csv(regress_variables(stats, *socio), out / "analytics" / "regression.csv");
    }
  }

  std::error_code ec;
  fs::remove_all(work, ec);

  json cells_json = json::array();
  for (const CellState& s : cells) {
    report.cells.push_back(s.report);
    json c{{"cell", s.report.cell.id()},
           {"status", s.report.status},
           {"scenes", s.report.scenes},
           {"coverage", s.report.coverage}};
    if (!s.report.error.empty()) c["error"] = s.report.error;
    cells_json.push_back(std::move(c));
  }
  write_json({{"config_hash", report.config_hash},
              {"cells", cells_json},
              {"tiles", report.tiles},
              {"counts",
               {{"ok", report.count("ok")},
                {"skipped", report.count("skipped")},
                {"failed", report.count("failed")}}}},
             out / "run_manifest.json");
  return report;
}

}  // namespace gbm
