#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gbm/raster.hpp"

namespace gbm {

/// Parameters of the synthetic desk-scale world. Cells are laid out three
/// per row from (30E, 0N) northward; the first n_cells carry buildings and
/// two more stay empty.
struct SyntheticWorldSpec {
  std::uint64_t seed = 42;
  int n_cells = 4;
  int buildings_per_cell = 120;
  int min_building_px = 6;   // edge length range, rounded to even pixels
  int max_building_px = 20;
  double vegetation_fraction = 0.6;   // share of bright vegetation in the background
  double cloud_scene_fraction = 0.4;  // cloud cover of the decoy scenes
  int decoys_per_cell = 6;            // bare-land patches outside the urban core
  int cell_pixels = 512;              // multiple of 32, at least 64

  void validate() const;
  double resolution_deg() const { return kGridCellDeg / cell_pixels; }
};

struct SyntheticWorld {
  std::vector<GridCell> cells;  // inhabited cells
  std::map<std::string, std::int64_t> building_pixels;
  double building_area_m2 = 0.0;
  std::filesystem::path config;
};

/// Writes the world under out_dir:
///   scenes/*.tif, manifest.csv            imagery and its scene manifest
///   settlement.tif urban.tif landcover.tif pv_atlas.tif
///   buildings.geojson regions.geojson socioeconomic.csv groups.csv
///   reference/{j}_{i}.tif                 planted building masks
///   config.json fixture.json
/// Same spec, same bytes.
SyntheticWorld generate_world(const SyntheticWorldSpec& spec, const std::filesystem::path& out_dir);

}  // namespace gbm
