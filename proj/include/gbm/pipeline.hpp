#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gbm/analytics.hpp"
#include "gbm/calibration.hpp"
#include "gbm/postprocess.hpp"
#include "gbm/raster.hpp"
#include "gbm/scenes.hpp"

namespace gbm {

struct PipelineInputs {
  std::filesystem::path manifest;
  std::filesystem::path settlement;
  std::filesystem::path landcover;
  std::filesystem::path urban;
  std::optional<std::filesystem::path> polygons;
  std::optional<std::filesystem::path> regions;
  std::optional<std::filesystem::path> pv_atlas;
  std::optional<std::filesystem::path> socioeconomic;
};

struct PipelineConfig {
  double grid_size_deg = kGridCellDeg;
  double tile_size_deg = kTileDeg;
  int vote_threshold = 2;
  int workers = 1;
  std::vector<std::string> segmenters{"baseline", "baseline", "baseline", "baseline"};
  CalibrationMode calibration_mode = CalibrationMode::per_scope;
  FilterRules filter;
  SolarParams solar;
  std::uint64_t seed = 0;
  double resolution_deg = 3.0 / kMetersPerDegree;
  double coverage_threshold = 0.99;
  CloudRule cloud_rule = CloudRule::independent;
  double max_cloud_pct = 10.0;
  double density_cell_m = kDefaultCellSizeM;
  PipelineInputs inputs;
  std::filesystem::path output_dir = "out";

  /// Throws Errc::config on any violated constraint.
  void validate() const;
  SceneQuery scene_query() const;
};

/// Parses a config document. Unknown keys are rejected; relative paths
/// resolve against base_dir.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Hex FNV-1a digest of the canonical config, excluding worker count and
/// output directory (neither affects artifact contents).
std::string config_hash(const PipelineConfig& config);

/// Runs items 0..n-1 on `workers` threads, item t on worker t % workers,
/// each worker in ascending order. An exception from an item is rethrown
/// after all workers finish; use per-item try/catch for isolation.
void run_round_robin(std::size_t n, int workers, const std::function<void(std::size_t)>& item);

struct CellReport {
  GridCell cell;
  std::string status;  // ok, skipped, failed
  std::vector<std::string> scenes;
  double coverage = 0.0;
  std::string error;
};

struct RunReport {
  std::string config_hash;
  std::vector<CellReport> cells;
  std::vector<std::string> tiles;
  double building_area_m2 = 0.0;
  double solar_potential_kwh = 0.0;

  std::size_t count(std::string_view status) const;
  /// 0 = success, 4 = every attempted cell failed.
  int exit_code() const;
};

/// Full chain per selected cell, then 5 degree tiles and analytics.
/// Artifacts go under config.output_dir; run_manifest.json records the
/// outcome. Errors setting up the run propagate; per-cell failures are
/// recorded in the report.
RunReport run_pipeline(const PipelineConfig& config);

}  // namespace gbm
