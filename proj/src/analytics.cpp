#include "gbm/analytics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "gbm/csv.hpp"
#include "gbm/error.hpp"
#include "gbm/kernels.hpp"

namespace gbm {

namespace fs = std::filesystem;

double nominal_pixel_size_m(const GeoTransform& t) { return t.pixel_height * kMetersPerDegree; }

int block_window(double cell_size_m, double pixel_size_m) {
  if (!(pixel_size_m > 0.0)) throw Error(Errc::invalid_argument, "pixel size must be positive");
  if (cell_size_m < pixel_size_m) {
    throw Error(Errc::invalid_argument, "aggregation cell is smaller than a pixel");
  }
  return std::max(1, static_cast<int>(std::lround(cell_size_m / pixel_size_m)));
}

namespace {

std::vector<std::uint8_t> mask_states(const RasterGrid& mask) {
  const auto band = mask.band(0);
  std::vector<std::uint8_t> s(band.size());
  for (std::size_t k = 0; k < band.size(); ++k) {
    s[k] = !mask.is_valid(band[k]) ? kernels::kAbstain
           : band[k] != 0.0F       ? kernels::kYes
                                   : kernels::kNo;
  }
  return s;
}

RasterFrame block_frame(const RasterFrame& f, int block, int cols, int rows) {
  RasterFrame out;
  out.transform = GeoTransform{f.transform.origin_lon, f.transform.origin_lat,
                               f.transform.pixel_width * block, f.transform.pixel_height * block};
  out.width = cols;
  out.height = rows;
  return out;
}

struct SolarBlocks {
  BlockCounts counts;
  std::vector<double> potential;  // kWh/year per block
};

SolarBlocks solar_blocks(const RasterGrid& buildings, const RasterGrid* atlas,
                         const SolarParams& params, double cell_size_m,
                         std::optional<double> pixel_size_m) {
  params.validate();
  const int block = block_window(
      cell_size_m, pixel_size_m.value_or(nominal_pixel_size_m(buildings.transform())));
  SolarBlocks sb;
  sb.counts = block_counts(buildings, block);
  const std::vector<double> areas = accounting_row_areas(buildings.frame());
  const auto band = buildings.band(0);
  const int w = buildings.width(), h = buildings.height();
  const int cols = sb.counts.cols, rows = sb.counts.rows;
  const RasterFrame bf = block_frame(buildings.frame(), block, cols, rows);
  sb.potential.assign(static_cast<std::size_t>(cols) * rows, 0.0);

#pragma omp parallel for schedule(static)
  for (int br = 0; br < rows; ++br) {
    for (int bc = 0; bc < cols; ++bc) {
      double area = 0.0;
      for (int r = br * block; r < std::min(h, (br + 1) * block); ++r) {
        std::int64_t n = 0;
        for (int c = bc * block; c < std::min(w, (bc + 1) * block); ++c) {
          const float v = band[static_cast<std::size_t>(r) * w + c];
          n += (buildings.is_valid(v) && v != 0.0F) ? 1 : 0;
        }
        area += static_cast<double>(n) * areas[static_cast<std::size_t>(r)];
      }
      const double pv = pv_at(atlas, bf.transform.col_center_lon(bc),
                              bf.transform.row_center_lat(br), params);
      sb.potential[static_cast<std::size_t>(br) * cols + bc] = solar_potential(area, pv, params);
    }
  }
  return sb;
}

}  // namespace

BlockCounts block_counts(const RasterGrid& mask, int block) {
  if (block < 1) throw Error(Errc::invalid_argument, "block size must be positive");
  BlockCounts bc;
  bc.block = block;
  bc.cols = (mask.width() + block - 1) / block;
  bc.rows = (mask.height() + block - 1) / block;
  bc.built.assign(static_cast<std::size_t>(bc.cols) * bc.rows, 0);
  bc.valid.assign(bc.built.size(), 0);
  const auto states = mask_states(mask);
  kernels::omp::block_counts(states, mask.width(), mask.height(), block, bc.built, bc.valid);
  return bc;
}

RasterGrid density_map(const RasterGrid& buildings, double cell_size_m,
                       std::optional<double> pixel_size_m) {
  const int block = block_window(
      cell_size_m, pixel_size_m.value_or(nominal_pixel_size_m(buildings.transform())));
  const BlockCounts bc = block_counts(buildings, block);
  std::vector<float> out(bc.built.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = bc.valid[k] == 0
                 ? kAnalyticsNodata
                 : static_cast<float>(100.0 * static_cast<double>(bc.built[k]) /
                                      static_cast<double>(bc.valid[k]));
  }
  return RasterGrid(block_frame(buildings.frame(), block, bc.cols, bc.rows), 1, DataType::f32,
                    std::move(out), kAnalyticsNodata);
}

std::vector<double> accounting_row_areas(const RasterFrame& frame) {
  std::vector<double> areas(static_cast<std::size_t>(frame.height));
  double max_area = 0.0;
  for (int r = 0; r < frame.height; ++r) {
    areas[static_cast<std::size_t>(r)] = std::max(0.0, pixel_area_m2(frame.transform, r));
    max_area = std::max(max_area, areas[static_cast<std::size_t>(r)]);
  }
  if (max_area == 0.0) return areas;
  int exp = 0;
  std::frexp(max_area, &exp);  // max_area < 2^exp
  const auto terms = static_cast<std::uint64_t>(frame.width) * static_cast<std::uint64_t>(frame.height);
  const int bits = static_cast<int>(std::bit_width(terms));  // terms < 2^bits
  const double quantum = std::ldexp(1.0, exp - 53 + bits);
  for (double& a : areas) a = std::nearbyint(a / quantum) * quantum;
  return areas;
}

double building_area(const RasterGrid& buildings) {
  const std::vector<double> areas = accounting_row_areas(buildings.frame());
  const auto band = buildings.band(0);
  const int w = buildings.width();
  double total = 0.0;
  for (int r = 0; r < buildings.height(); ++r) {
    std::int64_t n = 0;
    for (int c = 0; c < w; ++c) {
      const float v = band[static_cast<std::size_t>(r) * w + c];
      n += (buildings.is_valid(v) && v != 0.0F) ? 1 : 0;
    }
    total += static_cast<double>(n) * areas[static_cast<std::size_t>(r)];
  }
  return total;
}

void SolarParams::validate() const {
  if (!(a_p > 0.0)) throw Error(Errc::invalid_argument, "a_p must be positive");
  if (!(loss >= 0.0 && loss < 1.0)) throw Error(Errc::invalid_argument, "loss must be in [0, 1)");
  if (!(pv_default > 0.0)) throw Error(Errc::invalid_argument, "pv_default must be positive");
  if (!(n_days > 0.0)) throw Error(Errc::invalid_argument, "n_days must be positive");
  if (!(atlas_lat_min < atlas_lat_max)) {
    throw Error(Errc::invalid_argument, "atlas latitude band is empty");
  }
}

double solar_potential(double area_m2, double pv, const SolarParams& params) {
  if (!(params.a_p > 0.0)) throw Error(Errc::invalid_argument, "a_p must be positive");
  const double systems = area_m2 / params.a_p;
  return pv * (1.0 - params.loss) * systems * params.n_days;
}

double pv_at(const RasterGrid* atlas, double lon, double lat, const SolarParams& params) {
  if (atlas == nullptr || lat < params.atlas_lat_min || lat > params.atlas_lat_max) {
    return params.pv_default;
  }
  const int col = atlas->transform().col_of(lon);
  const int row = atlas->transform().row_of(lat);
  if (col < 0 || row < 0 || col >= atlas->width() || row >= atlas->height()) {
    return params.pv_default;
  }
  const float v = atlas->at(0, row, col);
  return atlas->is_valid(v) ? static_cast<double>(v) : params.pv_default;
}

RasterGrid solar_potential_map(const RasterGrid& buildings, const RasterGrid* atlas,
                               const SolarParams& params, double cell_size_m,
                               std::optional<double> pixel_size_m) {
  const SolarBlocks sb = solar_blocks(buildings, atlas, params, cell_size_m, pixel_size_m);
  std::vector<float> out(sb.potential.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = sb.counts.valid[k] == 0 ? kAnalyticsNodata : static_cast<float>(sb.potential[k]);
  }
  return RasterGrid(block_frame(buildings.frame(), sb.counts.block, sb.counts.cols, sb.counts.rows),
                    1, DataType::f32, std::move(out), kAnalyticsNodata);
}

double solar_potential_total(const RasterGrid& buildings, const RasterGrid* atlas,
                             const SolarParams& params, double cell_size_m,
                             std::optional<double> pixel_size_m) {
  const SolarBlocks sb = solar_blocks(buildings, atlas, params, cell_size_m, pixel_size_m);
  double total = 0.0;
  for (double p : sb.potential) total += p;
  return total;
}

double solar_potential_total(double area_m2, double pv, const SolarParams& params) {
  params.validate();
  return solar_potential(area_m2, pv, params);
}

std::vector<RegionStats> zonal_building_area(const RasterGrid& buildings,
                                             const PolygonSet& regions) {
  validate(regions);
  std::set<std::string> id_set;
  for (const Polygon& p : regions.polygons) {
    if (p.id == kUnassignedRegion) {
      throw Error(Errc::invalid_polygon, "region id 'unassigned' is reserved");
    }
    id_set.insert(p.id);
  }
  const std::vector<std::string> ids(id_set.begin(), id_set.end());

  const int w = buildings.width(), h = buildings.height();
  std::vector<int> owner(buildings.band_size(), -1);
  for (std::size_t g = 0; g < ids.size(); ++g) {
    for (const Polygon& p : regions.polygons) {
      if (p.id != ids[g]) continue;
      for_each_pixel_inside(p, buildings.frame(), [&](int row, int col) {
        int& o = owner[static_cast<std::size_t>(row) * w + col];
        if (o < 0) o = static_cast<int>(g);
      });
    }
  }

  const std::vector<double> areas = accounting_row_areas(buildings.frame());
  const auto band = buildings.band(0);
  const std::size_t groups = ids.size() + 1;  // last slot = unassigned
  std::vector<double> totals(groups, 0.0);
  std::vector<std::int64_t> row_counts(groups);
  for (int r = 0; r < h; ++r) {
    std::fill(row_counts.begin(), row_counts.end(), 0);
    for (int c = 0; c < w; ++c) {
      const std::size_t k = static_cast<std::size_t>(r) * w + c;
      if (!buildings.is_valid(band[k]) || band[k] == 0.0F) continue;
      const int o = owner[k];
      ++row_counts[o < 0 ? ids.size() : static_cast<std::size_t>(o)];
    }
    for (std::size_t g = 0; g < groups; ++g) {
      totals[g] += static_cast<double>(row_counts[g]) * areas[static_cast<std::size_t>(r)];
    }
  }

  std::vector<RegionStats> out;
  out.reserve(groups);
  for (std::size_t g = 0; g < ids.size(); ++g) out.push_back(RegionStats{ids[g], totals[g], {}});
  out.push_back(RegionStats{std::string(kUnassignedRegion), totals.back(), {}});
  return out;
}

RegressionResult regress(std::span<const double> x, std::span<const std::optional<double>> y) {
  if (x.size() != y.size()) throw Error(Errc::dims_mismatch, "x and y differ in length");
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!y[k] || !std::isfinite(*y[k]) || !std::isfinite(x[k])) continue;
    xs.push_back(x[k]);
    ys.push_back(*y[k]);
  }
  return regress(std::span<const double>(xs), std::span<const double>(ys));
}

RegressionResult regress(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::dims_mismatch, "x and y differ in length");
  const std::size_t n = x.size();
  if (n < 2) throw Error(Errc::invalid_argument, "regression needs at least two pairs");

  // Extended precision keeps exact linear data at rho == 1 after rounding.
  long double sx = 0, sy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sx += x[k];
    sy += y[k];
  }
  const long double mx = sx / static_cast<long double>(n);
  const long double my = sy / static_cast<long double>(n);
  long double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const long double dx = x[k] - mx;
    const long double dy = y[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0) throw Error(Errc::invalid_argument, "regression x is constant");

  RegressionResult r;
  r.n = n;
  r.slope = static_cast<double>(sxy / sxx);
  r.intercept = static_cast<double>(my - (sxy / sxx) * mx);
  const long double rho = syy == 0 ? 0.0L : sxy / std::sqrt(sxx * syy);
  r.rho = std::clamp(static_cast<double>(rho), -1.0, 1.0);
  return r;
}

void write_zonal_csv(const std::vector<RegionStats>& stats, const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << "region_id,building_area_m2\n";
  for (const RegionStats& s : stats) {
    out << s.region_id << ',' << csv::format_double(s.building_area_m2) << '\n';
  }
}

namespace {

double parse_number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::malformed_header, path.string() + ": not a number: '" + s + "'");
  }
}

}  // namespace

std::vector<RegionStats> read_zonal_csv(const fs::path& path) {
  const csv::Table t = csv::read(path);
  const int id = t.column("region_id");
  const int area = t.column("building_area_m2");
  if (id < 0 || area < 0) {
    throw Error(Errc::malformed_header, path.string() + ": needs region_id,building_area_m2");
  }
  std::vector<RegionStats> out;
  for (const auto& row : t.rows) {
    out.push_back(RegionStats{row[static_cast<std::size_t>(id)],
                              parse_number(row[static_cast<std::size_t>(area)], path), {}});
  }
  return out;
}

std::map<std::string, std::map<std::string, std::optional<double>>> read_socioeconomic_csv(
    const fs::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header.empty() || t.header[0] != "region_id") {
    throw Error(Errc::malformed_header, path.string() + ": first column must be region_id");
  }
  std::map<std::string, std::map<std::string, std::optional<double>>> out;
  for (const auto& row : t.rows) {
    auto& vars = out[row[0]];
    for (std::size_t k = 1; k < t.header.size(); ++k) {
      vars[t.header[k]] =
          row[k].empty() ? std::nullopt : std::optional<double>(parse_number(row[k], path));
    }
  }
  return out;
}

std::vector<VariableFit> regress_variables(
    const std::vector<RegionStats>& areas,
    const std::map<std::string, std::map<std::string, std::optional<double>>>& socio) {
  std::vector<VariableFit> fits;
  for (std::string_view var : kSocioVariables) {
    std::vector<double> x;
    std::vector<std::optional<double>> y;
    bool present = false;
    for (const RegionStats& s : areas) {
      if (s.region_id == kUnassignedRegion) continue;
      const auto it = socio.find(s.region_id);
      if (it == socio.end()) continue;
      const auto v = it->second.find(std::string(var));
      if (v == it->second.end()) continue;
      present = true;
      x.push_back(s.building_area_m2);
      y.push_back(v->second);
    }
    if (!present) continue;
    try {
      fits.push_back(VariableFit{std::string(var), regress(x, y)});
    } catch (const Error& e) {
      if (e.code() != Errc::invalid_argument) throw;
    }
  }
  return fits;
}

void write_regression_csv(const std::vector<VariableFit>& fits, const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << "variable,slope,intercept,rho,n\n";
  for (const VariableFit& f : fits) {
    out << f.variable << ',' << csv::format_double(f.fit.slope) << ','
        << csv::format_double(f.fit.intercept) << ',' << csv::format_double(f.fit.rho) << ','
        << f.fit.n << '\n';
  }
}

}  // namespace gbm
