#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gbm/raster.hpp"

namespace gbm {

enum class SceneKind { surface_reflectance, basemap };
std::string_view scene_kind_name(SceneKind k) noexcept;
SceneKind parse_scene_kind(std::string_view s);

struct SceneRecord {
  std::string scene_id;
  GeoBox footprint;
  double cloud_pct = 0.0;
  double haze_pct = 0.0;
  int year = 0;
  SceneKind kind = SceneKind::surface_reflectance;
  std::filesystem::path path;
};

/// Reads `scene_id,min_lon,min_lat,max_lon,max_lat,cloud_pct,haze_pct,year,kind,path`.
/// Relative paths resolve against the manifest's directory.
std::vector<SceneRecord> read_scene_manifest(const std::filesystem::path& path);
void write_scene_manifest(const std::vector<SceneRecord>& scenes,
                          const std::filesystem::path& path);

/// Cells containing at least one built pixel center, sorted by (j, i).
std::vector<GridCell> select_cells(const RasterGrid& settlement);

enum class CloudRule { independent, combined };
CloudRule parse_cloud_rule(std::string_view s);
std::string_view cloud_rule_name(CloudRule r) noexcept;

struct SceneQuery {
  double max_cloud_pct = 10.0;
  CloudRule cloud_rule = CloudRule::independent;
  double coverage_threshold = 0.99;
  std::vector<int> years{2019, 2018};  // in order of preference
};

struct SceneSelection {
  std::vector<SceneRecord> scenes;  // mosaic order
  double coverage = 0.0;            // fraction of the cell covered by the footprints
  bool skipped() const { return scenes.empty(); }
};

bool passes_quality(const SceneRecord& s, const SceneQuery& q);

/// Fraction of box covered by the union of the footprints.
double coverage_fraction(const std::vector<SceneRecord>& scenes, const GeoBox& box);

/// Surface-reflectance scenes of the preferred year, then the next years
/// while coverage stays below the threshold, then basemap records. The
/// result is ordered surface reflectance first, newest first, then by
/// cloud and id.
SceneSelection select_scenes(const std::vector<SceneRecord>& manifest, const GridCell& cell,
                             const SceneQuery& query = {});

}  // namespace gbm
