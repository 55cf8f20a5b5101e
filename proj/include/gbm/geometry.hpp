#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "gbm/raster.hpp"

namespace gbm {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  bool operator==(const LonLat&) const = default;
};

/// Closed ring: the last vertex repeats the first.
using Ring = std::vector<LonLat>;

/// rings[0] is the outer boundary, the rest are holes. Membership follows
/// the even-odd rule over all rings.
struct Polygon {
  std::vector<Ring> rings;
  std::string id;
};

struct PolygonSet {
  std::vector<Polygon> polygons;
};

/// Throws unclosed_ring / invalid_polygon.
void validate(const Polygon& p);
void validate(const PolygonSet& ps);

GeoBox bounds(const Polygon& p);

/// Even-odd point membership (crossing test against every ring edge).
bool contains(const Polygon& p, double lon, double lat);

/// Calls visit(row, col) for every pixel of the frame whose center lies in
/// p. Uses the same crossing arithmetic as contains(), so the two agree
/// exactly.
void for_each_pixel_inside(const Polygon& p, const RasterFrame& frame,
                           const std::function<void(int, int)>& visit);

/// GeoJSON FeatureCollection with Polygon / MultiPolygon geometries. The
/// polygon id comes from properties[id_key], falling back to the feature id.
PolygonSet parse_geojson(std::string_view text, std::string_view id_key = "id");
PolygonSet read_geojson(const std::filesystem::path& path, std::string_view id_key = "id");
std::string to_geojson(const PolygonSet& ps, std::string_view id_key = "id");
void write_geojson(const PolygonSet& ps, const std::filesystem::path& path,
                   std::string_view id_key = "id");

}  // namespace gbm
