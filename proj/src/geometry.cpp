#include "gbm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gbm/error.hpp"

namespace gbm {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const Polygon& p) {
  if (p.rings.empty()) throw Error(Errc::invalid_polygon, "polygon '" + p.id + "' has no rings");
  for (const Ring& r : p.rings) {
    if (r.size() < 4) {
      throw Error(Errc::invalid_polygon, "ring of polygon '" + p.id + "' has fewer than 4 vertices");
    }
    for (const LonLat& v : r) {
      if (!std::isfinite(v.lon) || !std::isfinite(v.lat)) {
        throw Error(Errc::invalid_polygon, "non-finite vertex in polygon '" + p.id + "'");
      }
    }
    if (!(r.front() == r.back())) {
      throw Error(Errc::unclosed_ring, "ring of polygon '" + p.id + "' is not closed");
    }
  }
}

void validate(const PolygonSet& ps) {
  for (const Polygon& p : ps.polygons) validate(p);
}

GeoBox bounds(const Polygon& p) {
  GeoBox b{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const Ring& r : p.rings) {
    for (const LonLat& v : r) {
      b.min_lon = std::min(b.min_lon, v.lon);
      b.max_lon = std::max(b.max_lon, v.lon);
      b.min_lat = std::min(b.min_lat, v.lat);
      b.max_lat = std::max(b.max_lat, v.lat);
    }
  }
  return b;
}

namespace {

// Longitude where edge (a, b) crosses the parallel `lat`, if it does.
bool crossing(const LonLat& a, const LonLat& b, double lat, double& lon) {
  if ((a.lat > lat) == (b.lat > lat)) return false;
  lon = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
  return true;
}

}  // namespace

bool contains(const Polygon& p, double lon, double lat) {
  bool inside = false;
  double x = 0.0;
  for (const Ring& r : p.rings) {
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
      if (crossing(r[k], r[k + 1], lat, x) && lon < x) inside = !inside;
    }
  }
  return inside;
}

void for_each_pixel_inside(const Polygon& p, const RasterFrame& frame,
                           const std::function<void(int, int)>& visit) {
  const GeoBox b = bounds(p);
  const GeoTransform& t = frame.transform;
  const int r0 = std::max(0, static_cast<int>(std::floor(t.row_coord(b.max_lat) - 0.5)));
  const int r1 = std::min(frame.height - 1, static_cast<int>(std::ceil(t.row_coord(b.min_lat))));
  const int c0 = std::max(0, static_cast<int>(std::floor(t.col_coord(b.min_lon) - 0.5)));
  const int c1 = std::min(frame.width - 1, static_cast<int>(std::ceil(t.col_coord(b.max_lon))));
  if (r1 < r0 || c1 < c0) return;

  std::vector<double> xs;
  for (int row = r0; row <= r1; ++row) {
    const double lat = t.row_center_lat(row);
    xs.clear();
    double x = 0.0;
    for (const Ring& r : p.rings) {
      for (std::size_t k = 0; k + 1 < r.size(); ++k) {
        if (crossing(r[k], r[k + 1], lat, x)) xs.push_back(x);
      }
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    // Crossings strictly east of the center decide parity.
    auto it = xs.begin();
    for (int col = c0; col <= c1; ++col) {
      const double lon = t.col_center_lon(col);
      while (it != xs.end() && *it <= lon) ++it;
      if ((xs.end() - it) % 2 == 1) visit(row, col);
    }
  }
}

namespace {

Ring parse_ring(const json& j) {
  Ring r;
  if (!j.is_array()) throw Error(Errc::invalid_polygon, "ring is not an array");
  for (const auto& v : j) {
    if (!v.is_array() || v.size() < 2) throw Error(Errc::invalid_polygon, "bad coordinate");
    r.push_back(LonLat{v[0].get<double>(), v[1].get<double>()});
  }
  return r;
}

Polygon parse_polygon(const json& coords, const std::string& id) {
  Polygon p;
  p.id = id;
  if (!coords.is_array()) throw Error(Errc::invalid_polygon, "polygon coordinates not an array");
  for (const auto& ring : coords) p.rings.push_back(parse_ring(ring));
  validate(p);
  return p;
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  return {};
}

}  // namespace

PolygonSet parse_geojson(std::string_view text, std::string_view id_key) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_polygon, std::string("GeoJSON parse error: ") + e.what());
  }
  PolygonSet ps;
  try {
    std::vector<json> features;
    if (doc.value("type", "") == "FeatureCollection") {
      for (const auto& f : doc.at("features")) features.push_back(f);
    } else if (doc.value("type", "") == "Feature") {
      features.push_back(doc);
    } else {
      throw Error(Errc::invalid_polygon, "expected a GeoJSON Feature or FeatureCollection");
    }
    for (std::size_t k = 0; k < features.size(); ++k) {
      const json& f = features[k];
      std::string id;
      if (f.contains("properties") && f["properties"].is_object() &&
          f["properties"].contains(std::string(id_key))) {
        id = id_string(f["properties"][std::string(id_key)]);
      } else if (f.contains("id")) {
        id = id_string(f["id"]);
      }
      if (id.empty()) id = std::to_string(k);
      const json& g = f.at("geometry");
      if (g.is_null()) continue;
      const std::string type = g.at("type").get<std::string>();
      if (type == "Polygon") {
        ps.polygons.push_back(parse_polygon(g.at("coordinates"), id));
      } else if (type == "MultiPolygon") {
        for (const auto& part : g.at("coordinates")) ps.polygons.push_back(parse_polygon(part, id));
      } else {
        throw Error(Errc::invalid_polygon, "unsupported geometry type " + type);
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_polygon, std::string("GeoJSON structure error: ") + e.what());
  }
  return ps;
}

PolygonSet read_geojson(const fs::path& path, std::string_view id_key) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_geojson(ss.str(), id_key);
}

std::string to_geojson(const PolygonSet& ps, std::string_view id_key) {
  json features = json::array();
  for (const Polygon& p : ps.polygons) {
    json rings = json::array();
    for (const Ring& r : p.rings) {
      json ring = json::array();
      for (const LonLat& v : r) ring.push_back({v.lon, v.lat});
      rings.push_back(std::move(ring));
    }
    json f;
    f["type"] = "Feature";
    f["properties"] = {{std::string(id_key), p.id}};
    f["geometry"] = {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
    features.push_back(std::move(f));
  }
  json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc.dump();
}

void write_geojson(const PolygonSet& ps, const fs::path& path, std::string_view id_key) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << to_geojson(ps, id_key) << '\n';
}

}  // namespace gbm
