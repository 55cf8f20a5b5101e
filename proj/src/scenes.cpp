#include "gbm/scenes.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "gbm/csv.hpp"
#include "gbm/error.hpp"

namespace gbm {

namespace fs = std::filesystem;

std::string_view scene_kind_name(SceneKind k) noexcept {
  return k == SceneKind::basemap ? "basemap" : "surface-reflectance";
}

SceneKind parse_scene_kind(std::string_view s) {
  if (s == "surface-reflectance" || s == "sr") return SceneKind::surface_reflectance;
  if (s == "basemap") return SceneKind::basemap;
  throw Error(Errc::malformed_header, "unknown scene kind '" + std::string(s) + "'");
}

namespace {

double number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::malformed_header, path.string() + ": not a number: '" + s + "'");
}

}  // namespace

std::vector<SceneRecord> read_scene_manifest(const fs::path& path) {
  static constexpr std::string_view kColumns[] = {
      "scene_id", "min_lon", "min_lat", "max_lon", "max_lat",
      "cloud_pct", "haze_pct", "year", "kind", "path"};
  const csv::Table t = csv::read(path);
  std::vector<std::size_t> idx;
  for (std::string_view c : kColumns) {
    const int k = t.column(c);
    if (k < 0) throw Error(Errc::malformed_header, path.string() + ": missing column " + std::string(c));
    idx.push_back(static_cast<std::size_t>(k));
  }
  std::vector<SceneRecord> out;
  for (const auto& row : t.rows) {
    SceneRecord s;
    s.scene_id = row[idx[0]];
    s.footprint = GeoBox{number(row[idx[1]], path), number(row[idx[2]], path),
                         number(row[idx[3]], path), number(row[idx[4]], path)};
    s.cloud_pct = number(row[idx[5]], path);
    s.haze_pct = number(row[idx[6]], path);
    s.year = static_cast<int>(number(row[idx[7]], path));
    s.kind = parse_scene_kind(row[idx[8]]);
    s.path = row[idx[9]];
    if (s.path.is_relative()) s.path = path.parent_path() / s.path;
    if (!(s.footprint.max_lon > s.footprint.min_lon && s.footprint.max_lat > s.footprint.min_lat)) {
      throw Error(Errc::malformed_header, "scene " + s.scene_id + ": empty footprint");
    }
    if (s.cloud_pct < 0 || s.cloud_pct > 100 || s.haze_pct < 0 || s.haze_pct > 100) {
      throw Error(Errc::malformed_header, "scene " + s.scene_id + ": percentage out of [0, 100]");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_scene_manifest(const std::vector<SceneRecord>& scenes, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << "scene_id,min_lon,min_lat,max_lon,max_lat,cloud_pct,haze_pct,year,kind,path\n";
  for (const SceneRecord& s : scenes) {
    out << s.scene_id << ',' << csv::format_double(s.footprint.min_lon) << ','
        << csv::format_double(s.footprint.min_lat) << ',' << csv::format_double(s.footprint.max_lon)
        << ',' << csv::format_double(s.footprint.max_lat) << ',' << csv::format_double(s.cloud_pct)
        << ',' << csv::format_double(s.haze_pct) << ',' << s.year << ',' << scene_kind_name(s.kind)
        << ',' << s.path.generic_string() << '\n';
  }
}

std::vector<GridCell> select_cells(const RasterGrid& settlement) {
  std::set<GridCell> cells;
  const auto& t = settlement.transform();
  for (int r = 0; r < settlement.height(); ++r) {
    for (int c = 0; c < settlement.width(); ++c) {
      const float v = settlement.at(0, r, c);
      if (!settlement.is_valid(v) || v == 0.0F) continue;
      cells.insert(GridCell::containing(t.col_center_lon(c), t.row_center_lat(r)));
    }
  }
  return {cells.begin(), cells.end()};
}

CloudRule parse_cloud_rule(std::string_view s) {
  if (s == "independent") return CloudRule::independent;
  if (s == "combined") return CloudRule::combined;
  throw Error(Errc::invalid_argument, "unknown cloud rule '" + std::string(s) + "'");
}

std::string_view cloud_rule_name(CloudRule r) noexcept {
  return r == CloudRule::combined ? "combined" : "independent";
}

bool passes_quality(const SceneRecord& s, const SceneQuery& q) {
  if (q.cloud_rule == CloudRule::combined) return s.cloud_pct + s.haze_pct < q.max_cloud_pct;
  return s.cloud_pct < q.max_cloud_pct && s.haze_pct < q.max_cloud_pct;
}

double coverage_fraction(const std::vector<SceneRecord>& scenes, const GeoBox& box) {
  if (!(box.area() > 0.0)) return 0.0;
  std::vector<GeoBox> parts;
  std::vector<double> xs{box.min_lon, box.max_lon}, ys{box.min_lat, box.max_lat};
  for (const SceneRecord& s : scenes) {
    if (const auto p = s.footprint.intersection(box)) {
      parts.push_back(*p);
      xs.insert(xs.end(), {p->min_lon, p->max_lon});
      ys.insert(ys.end(), {p->min_lat, p->max_lat});
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double covered = 0.0;
  for (std::size_t a = 0; a + 1 < xs.size(); ++a) {
    for (std::size_t b = 0; b + 1 < ys.size(); ++b) {
      const double cx = 0.5 * (xs[a] + xs[a + 1]);
      const double cy = 0.5 * (ys[b] + ys[b + 1]);
      const bool hit = std::any_of(parts.begin(), parts.end(), [&](const GeoBox& p) {
        return cx > p.min_lon && cx < p.max_lon && cy > p.min_lat && cy < p.max_lat;
      });
      if (hit) covered += (xs[a + 1] - xs[a]) * (ys[b + 1] - ys[b]);
    }
  }
  return std::min(1.0, covered / box.area());
}

SceneSelection select_scenes(const std::vector<SceneRecord>& manifest, const GridCell& cell,
                             const SceneQuery& query) {
  const GeoBox box = cell.bbox();
  SceneSelection sel;
  for (int year : query.years) {
    for (const SceneRecord& s : manifest) {
      if (s.kind == SceneKind::surface_reflectance && s.year == year &&
          s.footprint.intersects(box) && passes_quality(s, query)) {
        sel.scenes.push_back(s);
      }
    }
    sel.coverage = coverage_fraction(sel.scenes, box);
    if (sel.coverage >= query.coverage_threshold) break;
  }
  if (sel.coverage < query.coverage_threshold) {
    for (const SceneRecord& s : manifest) {
      if (s.kind == SceneKind::basemap && s.footprint.intersects(box)) sel.scenes.push_back(s);
    }
    sel.coverage = coverage_fraction(sel.scenes, box);
  }
  std::sort(sel.scenes.begin(), sel.scenes.end(), [](const SceneRecord& a, const SceneRecord& b) {
    if (a.kind != b.kind) return a.kind == SceneKind::surface_reflectance;
    if (a.year != b.year) return a.year > b.year;
    if (a.cloud_pct != b.cloud_pct) return a.cloud_pct < b.cloud_pct;
    return a.scene_id < b.scene_id;
  });
  return sel;
}

}  // namespace gbm
