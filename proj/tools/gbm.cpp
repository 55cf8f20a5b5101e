// gbm: command-line front end for the building-map pipeline and its stages.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gbm/analytics.hpp"
#include "gbm/calibration.hpp"
#include "gbm/coregister.hpp"
#include "gbm/csv.hpp"
#include "gbm/ensemble.hpp"
#include "gbm/error.hpp"
#include "gbm/evaluation.hpp"
#include "gbm/fixtures.hpp"
#include "gbm/geometry.hpp"
#include "gbm/labelgen.hpp"
#include "gbm/pipeline.hpp"
#include "gbm/postprocess.hpp"
#include "gbm/raster_io.hpp"

namespace fs = std::filesystem;
using namespace gbm;

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::config: return 2;
    case Errc::io:
    case Errc::malformed_header:
    case Errc::truncated_payload:
    case Errc::dtype_mismatch: return 3;
    default: return 1;
  }
}

GeoBox parse_bbox(const std::vector<double>& v) {
  if (v.size() != 4) throw Error(Errc::invalid_argument, "--bbox takes min_lon min_lat max_lon max_lat");
  return GeoBox{v[0], v[1], v[2], v[3]};
}

std::set<int> to_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Building map pipeline: tile selection, calibration, ensemble inference, "
               "post-filtering and analytics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gbm 0.1.0");

  std::function<int()> action;

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  fs::path run_config;
  std::optional<int> run_workers;
  run->add_option("--config", run_config, "Pipeline config (JSON)")->required();
  run->add_option("--workers", run_workers, "Override the worker count");
  run->callback([&] {
    action = [&] {
      PipelineConfig cfg;
      try {
        cfg = load_config(run_config);
        if (run_workers) {
          cfg.workers = *run_workers;
          cfg.validate();
        }
      } catch (const Error& e) {
        std::cerr << "gbm run: " << e.what() << '\n';
        return 2;
      }
      try {
        const RunReport rep = run_pipeline(cfg);
        std::cout << "cells ok=" << rep.count("ok") << " skipped=" << rep.count("skipped")
                  << " failed=" << rep.count("failed") << " tiles=" << rep.tiles.size()
                  << " building_area_m2=" << csv::format_double(rep.building_area_m2)
                  << " solar_kwh=" << csv::format_double(rep.solar_potential_kwh) << '\n';
        for (const CellReport& c : rep.cells) {
          if (!c.error.empty()) std::cerr << "cell " << c.cell.id() << ": " << c.error << '\n';
        }
        return rep.exit_code();
      } catch (const Error& e) {
        std::cerr << "gbm run: " << e.what() << '\n';
        return e.code() == Errc::config ? 2 : 3;
      } catch (const std::exception& e) {
        std::cerr << "gbm run: " << e.what() << '\n';
        return 3;
      }
    };
  });

  // fixtures generate
  auto* fixtures = app.add_subcommand("fixtures", "Synthetic test data");
  fixtures->require_subcommand(1);
  auto* gen = fixtures->add_subcommand("generate", "Write the synthetic desk-scale world");
  SyntheticWorldSpec spec;
  fs::path gen_out = "world";
  gen->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--cells", spec.n_cells, "Inhabited cells")->capture_default_str();
  gen->add_option("--buildings", spec.buildings_per_cell, "Buildings per cell")->capture_default_str();
  gen->add_option("--cell-pixels", spec.cell_pixels, "Pixels per cell edge")->capture_default_str();
  gen->add_option("--cloud-fraction", spec.cloud_scene_fraction, "Cloud cover of decoy scenes")
      ->capture_default_str();
  gen->callback([&] {
    action = [&] {
      const SyntheticWorld w = generate_world(spec, gen_out);
      std::cout << "cells=" << w.cells.size()
                << " building_area_m2=" << csv::format_double(w.building_area_m2)
                << " config=" << w.config.string() << '\n';
      return 0;
    };
  });

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "IQR clip and normalize to [0, 1]");
  fs::path cal_in, cal_out;
  std::string cal_mode = "per-scope";
  cal->add_option("--in", cal_in)->required();
  cal->add_option("--out", cal_out)->required();
  cal->add_option("--mode", cal_mode)->check(CLI::IsMember({"per-scope", "per-patch"}))->capture_default_str();
  cal->callback([&] {
    action = [&] {
      write_raster(calibrate(read_raster(cal_in), parse_calibration_mode(cal_mode)), cal_out);
      return 0;
    };
  });

  // coregister
  auto* co = app.add_subcommand("coregister", "Estimate the image/mask translation");
  fs::path co_image, co_mask, co_out;
  std::optional<fs::path> co_shifted;
  int co_window = kDefaultSearchWindow;
  co->add_option("--image", co_image)->required();
  co->add_option("--mask", co_mask)->required();
  co->add_option("--window", co_window)->capture_default_str();
  co->add_option("--out-shift", co_out, "Text file receiving 'dx dy score'");
  co->add_option("--shifted-mask", co_shifted, "Write the mask moved by the estimated shift");
  co->callback([&] {
    action = [&] {
      const RasterGrid image = read_raster(co_image);
      const RasterGrid mask = read_raster(co_mask);
      const RasterGrid gray = image.bands() >= 3 ? to_grayscale(image) : image;
      const Shift s = estimate_shift(sobel_magnitude(gray), sobel_magnitude(mask), co_window);
      const std::string line = std::to_string(s.dx) + " " + std::to_string(s.dy) + " " +
                               csv::format_double(s.score);
      if (co_out.empty()) {
        std::cout << line << '\n';
      } else {
        std::ofstream(co_out) << line << '\n';
      }
      if (co_shifted) write_raster(apply_shift(mask, s), *co_shifted);
      return 0;
    };
  });

  // labelgen
  auto* lg = app.add_subcommand("labelgen", "Rasterize polygons into distance labels");
  fs::path lg_polys, lg_frame, lg_out;
  std::optional<fs::path> lg_mask;
  double lg_beta = kDefaultBeta;
  lg->add_option("--polygons", lg_polys, "GeoJSON")->required();
  lg->add_option("--frame-like", lg_frame, "Raster providing the pixel frame")->required();
  lg->add_option("--beta", lg_beta)->capture_default_str();
  lg->add_option("--out", lg_out)->required();
  lg->add_option("--mask-out", lg_mask, "Also write the binary mask");
  lg->callback([&] {
    action = [&] {
      const RasterGrid mask = rasterize(read_geojson(lg_polys), read_raster(lg_frame).frame());
      if (lg_mask) write_raster(mask, *lg_mask);
      write_raster(truncate_and_bin(signed_distance(mask), lg_beta), lg_out);
      return 0;
    };
  });

  // cut-patches
  auto* cp = app.add_subcommand("cut-patches", "Cut 256x256 training pairs and split them");
  fs::path cp_image, cp_labels, cp_out;
  std::uint64_t cp_seed = 0;
  cp->add_option("--image", cp_image)->required();
  cp->add_option("--labels", cp_labels)->required();
  cp->add_option("--seed", cp_seed)->required();
  cp->add_option("--out-dir", cp_out)->required();
  cp->callback([&] {
    action = [&] {
      const auto pairs = cut_patches(read_raster(cp_image), read_raster(cp_labels), cp_seed);
      fs::create_directories(cp_out);
      std::ofstream manifest(cp_out / "manifest.csv");
      manifest << "patch_id,row,col,split\n";
      for (const PatchPair& pp : pairs) {
        const std::string id = std::to_string(pp.id);
        write_raster(pp.image, cp_out / "image" / (id + ".tif"));
        write_raster(pp.labels, cp_out / "labels" / (id + ".tif"));
        manifest << id << ',' << pp.row << ',' << pp.col << ',' << split_name(pp.split) << '\n';
      }
      return 0;
    };
  });

  // infer
  auto* inf = app.add_subcommand("infer", "Run segmenters on a calibrated image");
  fs::path inf_image, inf_out;
  std::vector<std::string> inf_specs;
  inf->add_option("--image", inf_image)->required();
  inf->add_option("--segmenter", inf_specs, "baseline or exec:<cmd>; repeatable")->required();
  inf->add_option("--out-dir", inf_out)->required();
  inf->callback([&] {
    action = [&] {
      std::vector<std::shared_ptr<const Segmenter>> segs;
      for (const auto& s : inf_specs) segs.push_back(make_segmenter(s, inf_out / "work"));
      const auto labels = run_segmenters(read_raster(inf_image), segs);
      std::error_code ec;
      fs::remove_all(inf_out / "work", ec);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        write_raster(labels[k], inf_out / ("labels_s" + std::to_string(k) + ".tif"));
      }
      return 0;
    };
  });

  // binarize
  auto* bin = app.add_subcommand("binarize", "Label raster to building mask (label > 5)");
  fs::path bin_in, bin_out;
  bin->add_option("--in", bin_in)->required();
  bin->add_option("--out", bin_out)->required();
  bin->callback([&] {
    action = [&] {
      write_raster(binarize(read_raster(bin_in)), bin_out);
      return 0;
    };
  });

  // vote
  auto* vote = app.add_subcommand("vote", "Majority vote over binary masks");
  int vote_threshold = kDefaultVoteThreshold;
  fs::path vote_out;
  std::vector<fs::path> vote_in;
  vote->add_option("--threshold", vote_threshold)->capture_default_str();
  vote->add_option("--out", vote_out)->required();
  vote->add_option("masks", vote_in, "Binary mask rasters")->required();
  vote->callback([&] {
    action = [&] {
      std::vector<RasterGrid> masks;
      for (const auto& p : vote_in) masks.push_back(read_raster(p));
      write_raster(majority_vote(masks, vote_threshold), vote_out);
      return 0;
    };
  });

  // mosaic
  auto* mos = app.add_subcommand("mosaic", "Composite rasters, most recent first");
  fs::path mos_out;
  std::vector<fs::path> mos_in;
  std::vector<double> mos_bbox;
  std::optional<double> mos_res;
  mos->add_option("--out", mos_out)->required();
  mos->add_option("--bbox", mos_bbox, "min_lon min_lat max_lon max_lat")->expected(4);
  mos->add_option("--resolution", mos_res, "Output pixel size in degrees");
  mos->add_option("inputs", mos_in)->required();
  mos->callback([&] {
    action = [&] {
      std::vector<RasterGrid> rs;
      for (const auto& p : mos_in) rs.push_back(read_raster(p));
      GeoBox box = rs.front().extent();
      for (const auto& r : rs) {
        const GeoBox e = r.extent();
        box = GeoBox{std::min(box.min_lon, e.min_lon), std::min(box.min_lat, e.min_lat),
                     std::max(box.max_lon, e.max_lon), std::max(box.max_lat, e.max_lat)};
      }
      if (!mos_bbox.empty()) box = parse_bbox(mos_bbox);
      write_raster(mosaic(rs, box, mos_res.value_or(rs.front().transform().pixel_width)), mos_out);
      return 0;
    };
  });

  // filter
  auto* flt = app.add_subcommand("filter", "Area-aware land-cover filtering");
  fs::path flt_b, flt_u, flt_lc, flt_out;
  std::vector<int> flt_remove{kCropland, kGrass, kShrub}, flt_keep{kImpervious};
  flt->add_option("--buildings", flt_b)->required();
  flt->add_option("--urban", flt_u)->required();
  flt->add_option("--landcover", flt_lc)->required();
  flt->add_option("--out", flt_out)->required();
  flt->add_option("--urban-remove", flt_remove, "Classes removed in urban areas")->capture_default_str();
  flt->add_option("--nonurban-keep", flt_keep, "Classes kept outside urban areas")->capture_default_str();
  flt->callback([&] {
    action = [&] {
      const RasterGrid b = read_raster(flt_b);
      FilterRules rules{to_set(flt_remove), to_set(flt_keep)};
      write_raster(area_aware_filter(b, align_to(read_raster(flt_u), b.frame()),
                                     align_to(read_raster(flt_lc), b.frame()), rules),
                   flt_out);
      return 0;
    };
  });

  // density
  auto* den = app.add_subcommand("density", "Building density per aggregation cell (percent)");
  fs::path den_in, den_out;
  double den_cell = kDefaultCellSizeM;
  std::optional<double> den_px;
  den->add_option("--in", den_in)->required();
  den->add_option("--out", den_out)->required();
  den->add_option("--cell-size", den_cell, "Meters")->capture_default_str();
  den->add_option("--pixel-size", den_px, "Meters; defaults to the nominal size");
  den->callback([&] {
    action = [&] {
      write_raster(density_map(read_raster(den_in), den_cell, den_px), den_out);
      return 0;
    };
  });

  SolarParams solar;
  auto solar_options = [&](CLI::App* c) {
    c->add_option("--a-p", solar.a_p, "m^2 per 1 kWp system")->capture_default_str();
    c->add_option("--loss", solar.loss)->capture_default_str();
    c->add_option("--pv-default", solar.pv_default, "kWh/kWp/day outside the atlas")->capture_default_str();
  };

  // solar-map
  auto* sm = app.add_subcommand("solar-map", "Yearly rooftop PV potential per cell (kWh)");
  fs::path sm_b, sm_out;
  std::optional<fs::path> sm_atlas;
  double sm_cell = kDefaultCellSizeM;
  sm->add_option("--buildings", sm_b)->required();
  sm->add_option("--atlas", sm_atlas, "PV atlas raster");
  sm->add_option("--out", sm_out)->required();
  sm->add_option("--cell-size", sm_cell)->capture_default_str();
  solar_options(sm);
  sm->callback([&] {
    action = [&] {
      std::optional<RasterGrid> atlas;
      if (sm_atlas) atlas = read_raster(*sm_atlas);
      write_raster(solar_potential_map(read_raster(sm_b), atlas ? &*atlas : nullptr, solar, sm_cell),
                   sm_out);
      return 0;
    };
  });

  // solar-total
  auto* st = app.add_subcommand("solar-total", "Total yearly rooftop PV potential (kWh)");
  std::optional<fs::path> st_b, st_atlas;
  std::optional<double> st_area, st_pv;
  double st_cell = kDefaultCellSizeM;
  auto* st_b_opt = st->add_option("--buildings", st_b, "Building mask");
  st->add_option("--area", st_area, "Building area in m^2")->excludes(st_b_opt);
  st->add_option("--atlas", st_atlas, "PV atlas raster");
  st->add_option("--pv", st_pv, "Constant PV, kWh/kWp/day");
  st->add_option("--cell-size", st_cell)->capture_default_str();
  solar_options(st);
  st->callback([&] {
    action = [&] {
      double total = 0.0;
      if (st_area) {
        total = solar_potential_total(*st_area, st_pv.value_or(solar.pv_default), solar);
      } else if (st_b) {
        std::optional<RasterGrid> atlas;
        if (st_atlas) atlas = read_raster(*st_atlas);
        const RasterGrid b = read_raster(*st_b);
        total = st_pv ? solar_potential_total(building_area(b), *st_pv, solar)
                      : solar_potential_total(b, atlas ? &*atlas : nullptr, solar, st_cell);
      } else {
        throw Error(Errc::invalid_argument, "give --buildings or --area");
      }
      std::cout << csv::format_double(total) << '\n';
      return 0;
    };
  });

  // zonal-area
  auto* za = app.add_subcommand("zonal-area", "Building area per region");
  fs::path za_b, za_regions, za_out;
  std::string za_key = "id";
  za->add_option("--buildings", za_b)->required();
  za->add_option("--regions", za_regions, "GeoJSON")->required();
  za->add_option("--id-key", za_key, "Feature property holding the region id")->capture_default_str();
  za->add_option("--out", za_out)->required();
  za->callback([&] {
    action = [&] {
      write_zonal_csv(zonal_building_area(read_raster(za_b), read_geojson(za_regions, za_key)), za_out);
      return 0;
    };
  });

  // regress
  auto* rg = app.add_subcommand("regress", "Regress socioeconomic variables on building area");
  fs::path rg_zonal, rg_socio, rg_out;
  rg->add_option("--zonal", rg_zonal, "CSV region_id,building_area_m2")->required();
  rg->add_option("--socio", rg_socio, "CSV region_id,<variables>")->required();
  rg->add_option("--out", rg_out)->required();
  rg->callback([&] {
    action = [&] {
      write_regression_csv(regress_variables(read_zonal_csv(rg_zonal), read_socioeconomic_csv(rg_socio)),
                           rg_out);
      return 0;
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "F1 and IoU of predicted masks");
  fs::path ev_pred, ev_ref, ev_out;
  std::optional<fs::path> ev_groups;
  std::string ev_agg = "micro";
  ev->add_option("--pred-dir", ev_pred)->required();
  ev->add_option("--ref-dir", ev_ref)->required();
  ev->add_option("--groups", ev_groups, "CSV patch_id,city,continent");
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--aggregation", ev_agg)->check(CLI::IsMember({"micro", "macro"}))->capture_default_str();
  ev->callback([&] {
    action = [&] {
      write_scores_csv(evaluate_dirs(ev_pred, ev_ref, ev_groups, parse_aggregation(ev_agg)), ev_out);
      return 0;
    };
  });

  CLI11_PARSE(app, argc, argv);
  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    std::cerr << "gbm: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "gbm: " << e.what() << '\n';
    return 1;
  }
}
