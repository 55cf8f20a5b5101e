#include "gbm/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "gbm/error.hpp"

namespace gbm {

namespace {

// Lattice coordinates that land within this many pixels of an integer are
// treated as that integer; box edges written as decimal degrees rarely
// divide exactly in binary.
constexpr double kSnap = 1e-7;

double snap_floor(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < kSnap ? r : std::floor(x);
}

double snap_ceil(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < kSnap ? r : std::ceil(x);
}

}  // namespace

std::string_view dtype_name(DataType t) noexcept {
  switch (t) {
    case DataType::u8: return "uint8";
    case DataType::u16: return "uint16";
    case DataType::f32: return "float32";
  }
  return "float32";
}

DataType parse_dtype(std::string_view name) {
  if (name == "uint8") return DataType::u8;
  if (name == "uint16") return DataType::u16;
  if (name == "float32") return DataType::f32;
  throw Error(Errc::dtype_mismatch, "unknown dtype '" + std::string(name) + "'");
}

float default_nodata(DataType t) noexcept {
  switch (t) {
    case DataType::u8: return 255.0F;
    case DataType::u16: return 65535.0F;
    case DataType::f32: return -9999.0F;
  }
  return -9999.0F;
}

bool representable(DataType t, float v) noexcept {
  switch (t) {
    case DataType::u8: return v >= 0.0F && v <= 255.0F && std::trunc(v) == v;
    case DataType::u16: return v >= 0.0F && v <= 65535.0F && std::trunc(v) == v;
    case DataType::f32: return true;
  }
  return false;
}

bool same_bits(float a, float b) noexcept {
  return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}

double GeoBox::area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

bool GeoBox::contains(double lon, double lat) const {
  return lon >= min_lon && lon < max_lon && lat > min_lat && lat <= max_lat;
}

bool GeoBox::intersects(const GeoBox& o) const {
  return std::min(max_lon, o.max_lon) > std::max(min_lon, o.min_lon) &&
         std::min(max_lat, o.max_lat) > std::max(min_lat, o.min_lat);
}

std::optional<GeoBox> GeoBox::intersection(const GeoBox& o) const {
  if (!intersects(o)) return std::nullopt;
  return GeoBox{std::max(min_lon, o.min_lon), std::max(min_lat, o.min_lat),
                std::min(max_lon, o.max_lon), std::min(max_lat, o.max_lat)};
}

int GeoTransform::col_of(double lon) const {
  return static_cast<int>(std::floor(col_coord(lon)));
}

int GeoTransform::row_of(double lat) const {
  return static_cast<int>(std::floor(row_coord(lat)));
}

GeoBox RasterFrame::extent() const {
  return GeoBox{transform.origin_lon, transform.origin_lat - height * transform.pixel_height,
                transform.origin_lon + width * transform.pixel_width, transform.origin_lat};
}

RasterFrame RasterFrame::for_box(const GeoBox& box, double resolution_deg) {
  if (!(resolution_deg > 0.0) || !(box.width() > 0.0) || !(box.height() > 0.0)) {
    throw Error(Errc::invalid_argument, "frame needs a positive resolution and box");
  }
  RasterFrame f;
  f.transform = GeoTransform{box.min_lon, box.max_lat, resolution_deg, resolution_deg};
  f.width = std::max(1, static_cast<int>(std::lround(box.width() / resolution_deg)));
  f.height = std::max(1, static_cast<int>(std::lround(box.height() / resolution_deg)));
  return f;
}

RasterGrid::RasterGrid(RasterFrame frame, int bands, DataType dtype, std::vector<float> values,
                       std::optional<float> nodata)
    : frame_(frame), bands_(bands), dtype_(dtype), values_(std::move(values)), nodata_(nodata) {
  if (frame_.width <= 0 || frame_.height <= 0 || bands_ < 1) {
    throw Error(Errc::invalid_argument, "raster needs positive dimensions and at least one band");
  }
  if (!(frame_.transform.pixel_width > 0.0) || !(frame_.transform.pixel_height > 0.0)) {
    throw Error(Errc::invalid_argument, "pixel size must be positive");
  }
  if (values_.size() != band_size() * static_cast<std::size_t>(bands_)) {
    throw Error(Errc::invalid_argument, "sample count does not match width*height*bands");
  }
}

RasterGrid RasterGrid::filled(RasterFrame frame, int bands, DataType dtype, float value,
                              std::optional<float> nodata) {
  const auto n = static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height) *
                 static_cast<std::size_t>(std::max(bands, 0));
  return RasterGrid(frame, bands, dtype, std::vector<float>(n, value), nodata);
}

std::span<const float> RasterGrid::band(int b) const {
  if (b < 0 || b >= bands_) throw Error(Errc::out_of_range, "band index out of range");
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(b) * band_size(),
                                                 band_size());
}

bool RasterGrid::is_valid(float v) const { return std::isfinite(v) && !is_nodata(v); }

bool RasterGrid::pixel_valid(int row, int col) const {
  for (int b = 0; b < bands_; ++b) {
    if (!is_valid(at(b, row, col))) return false;
  }
  return true;
}

bool RasterGrid::identical(const RasterGrid& o) const {
  if (!(frame_ == o.frame_) || bands_ != o.bands_ || dtype_ != o.dtype_) return false;
  if (nodata_.has_value() != o.nodata_.has_value()) return false;
  if (nodata_ && !same_bits(*nodata_, *o.nodata_)) return false;
  if (values_.size() != o.values_.size()) return false;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!same_bits(values_[k], o.values_[k])) return false;
  }
  return true;
}

GeoBox GridCell::bbox() const {
  return GeoBox{(i - 180 * kCellsPerDegree) / static_cast<double>(kCellsPerDegree),
                (90 * kCellsPerDegree - 1 - j) / static_cast<double>(kCellsPerDegree),
                (i + 1 - 180 * kCellsPerDegree) / static_cast<double>(kCellsPerDegree),
                (90 * kCellsPerDegree - j) / static_cast<double>(kCellsPerDegree)};
}

std::string GridCell::id() const { return std::to_string(j) + "_" + std::to_string(i); }

GridCell GridCell::containing(double lon, double lat) {
  return GridCell{static_cast<int>(std::floor((lon + 180.0) * kCellsPerDegree)),
                  static_cast<int>(std::floor((90.0 - lat) * kCellsPerDegree))};
}

GeoBox TileSpec::bbox() const {
  return GeoBox{static_cast<double>(lon0), static_cast<double>(lat0),
                static_cast<double>(lon0 + kTileDeg), static_cast<double>(lat0 + kTileDeg)};
}

std::string TileSpec::id() const { return std::to_string(lat0) + "_" + std::to_string(lon0); }

TileSpec TileSpec::containing(double lon, double lat) {
  return TileSpec{static_cast<int>(std::floor(lat / kTileDeg)) * kTileDeg,
                  static_cast<int>(std::floor(lon / kTileDeg)) * kTileDeg};
}

RasterGrid crop_window(const RasterGrid& r, const GeoBox& bbox) {
  const GeoTransform& t = r.transform();
  const int c0 = std::max(0, static_cast<int>(snap_floor(t.col_coord(bbox.min_lon))));
  const int c1 = std::min(r.width(), static_cast<int>(snap_ceil(t.col_coord(bbox.max_lon))));
  const int r0 = std::max(0, static_cast<int>(snap_floor(t.row_coord(bbox.max_lat))));
  const int r1 = std::min(r.height(), static_cast<int>(snap_ceil(t.row_coord(bbox.min_lat))));
  if (c1 <= c0 || r1 <= r0) {
    throw Error(Errc::empty_intersection, "crop box does not intersect raster extent");
  }

  RasterFrame f;
  f.transform = GeoTransform{t.origin_lon + c0 * t.pixel_width, t.origin_lat - r0 * t.pixel_height,
                             t.pixel_width, t.pixel_height};
  f.width = c1 - c0;
  f.height = r1 - r0;

  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(f.width) * f.height * r.bands());
  for (int b = 0; b < r.bands(); ++b) {
    for (int row = r0; row < r1; ++row) {
      for (int col = c0; col < c1; ++col) out.push_back(r.at(b, row, col));
    }
  }
  return RasterGrid(f, r.bands(), r.dtype(), std::move(out), r.nodata());
}

RasterGrid mosaic(std::span<const RasterGrid> rs, const GeoBox& target, double resolution_deg) {
  return mosaic_onto(rs, RasterFrame::for_box(target, resolution_deg));
}

RasterGrid mosaic_onto(std::span<const RasterGrid> rs, const RasterFrame& frame) {
  if (rs.empty()) throw Error(Errc::empty_input, "mosaic needs at least one input");
  const int bands = rs.front().bands();
  const DataType dtype = rs.front().dtype();
  for (const RasterGrid& r : rs) {
    if (r.bands() != bands) throw Error(Errc::band_mismatch, "mosaic inputs differ in band count");
    if (r.dtype() != dtype) throw Error(Errc::dtype_mismatch, "mosaic inputs differ in pixel type");
  }
  const float nodata = rs.front().nodata().value_or(default_nodata(dtype));

  // Per input, the source column/row hit by every output pixel center
  // (-1 when outside the input).
  struct Lookup {
    std::vector<int> cols;
    std::vector<int> rows;
  };
  std::vector<Lookup> lookups(rs.size());
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const GeoTransform& t = rs[k].transform();
    Lookup& lk = lookups[k];
    lk.cols.resize(static_cast<std::size_t>(frame.width));
    lk.rows.resize(static_cast<std::size_t>(frame.height));
    for (int c = 0; c < frame.width; ++c) {
      const int sc = t.col_of(frame.transform.col_center_lon(c));
      lk.cols[static_cast<std::size_t>(c)] = (sc >= 0 && sc < rs[k].width()) ? sc : -1;
    }
    for (int r = 0; r < frame.height; ++r) {
      const int sr = t.row_of(frame.transform.row_center_lat(r));
      lk.rows[static_cast<std::size_t>(r)] = (sr >= 0 && sr < rs[k].height()) ? sr : -1;
    }
  }

  const std::size_t plane = static_cast<std::size_t>(frame.width) * frame.height;
  std::vector<float> out(plane * static_cast<std::size_t>(bands), nodata);
  for (int row = 0; row < frame.height; ++row) {
    for (int col = 0; col < frame.width; ++col) {
      for (std::size_t k = 0; k < rs.size(); ++k) {
        const int sr = lookups[k].rows[static_cast<std::size_t>(row)];
        const int sc = lookups[k].cols[static_cast<std::size_t>(col)];
        if (sr < 0 || sc < 0 || !rs[k].pixel_valid(sr, sc)) continue;
        const std::size_t idx = static_cast<std::size_t>(row) * frame.width + col;
        for (int b = 0; b < bands; ++b) out[b * plane + idx] = rs[k].at(b, sr, sc);
        break;
      }
    }
  }
  return RasterGrid(frame, bands, dtype, std::move(out), nodata);
}

RasterGrid align_to(const RasterGrid& src, const RasterFrame& frame) {
  return mosaic_onto(std::span<const RasterGrid>(&src, 1), frame);
}

double pixel_area_m2(const GeoTransform& t, int row) {
  const double lat = t.row_center_lat(row);
  return t.pixel_width * t.pixel_height * kMetersPerDegree * kMetersPerDegree *
         std::cos(lat * std::numbers::pi / 180.0);
}

double pixel_area_m2(const RasterGrid& r, int row) {
  if (row < 0 || row >= r.height()) throw Error(Errc::out_of_range, "row index out of range");
  return pixel_area_m2(r.transform(), row);
}

}  // namespace gbm
