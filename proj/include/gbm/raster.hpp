#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gbm {

/// Meters per degree of arc used for all equirectangular conversions.
inline constexpr double kMetersPerDegree = 111320.0;
inline constexpr double kGridCellDeg = 0.2;
inline constexpr int kCellsPerDegree = 5;
inline constexpr int kTileDeg = 5;

enum class DataType : std::uint8_t { u8, u16, f32 };

std::string_view dtype_name(DataType t) noexcept;
DataType parse_dtype(std::string_view name);
/// Sentinel used when an operation must introduce nodata into a raster
/// that did not declare one.
float default_nodata(DataType t) noexcept;
bool representable(DataType t, float v) noexcept;

/// Exact bit comparison; nodata is never matched by tolerance.
bool same_bits(float a, float b) noexcept;

struct GeoBox {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;

  double width() const { return max_lon - min_lon; }
  double height() const { return max_lat - min_lat; }
  double area() const;
  bool contains(double lon, double lat) const;
  /// True when the boxes share a region of positive area.
  bool intersects(const GeoBox& o) const;
  std::optional<GeoBox> intersection(const GeoBox& o) const;

  bool operator==(const GeoBox&) const = default;
};

/// North-up geographic transform. Rows advance southward.
struct GeoTransform {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double pixel_width = 1.0;
  double pixel_height = 1.0;

  double col_center_lon(int col) const { return origin_lon + (col + 0.5) * pixel_width; }
  double row_center_lat(int row) const { return origin_lat - (row + 0.5) * pixel_height; }
  /// Fractional lattice coordinates of a geographic position.
  double col_coord(double lon) const { return (lon - origin_lon) / pixel_width; }
  double row_coord(double lat) const { return (origin_lat - lat) / pixel_height; }
  /// Index of the pixel containing the position (may be out of bounds).
  int col_of(double lon) const;
  int row_of(double lat) const;

  bool operator==(const GeoTransform&) const = default;
};

struct RasterFrame {
  GeoTransform transform;
  int width = 0;
  int height = 0;

  GeoBox extent() const;
  bool operator==(const RasterFrame&) const = default;

  /// Frame whose pixel lattice starts at the box's north-west corner.
  static RasterFrame for_box(const GeoBox& box, double resolution_deg);
};

/// Georeferenced multiband raster. Samples are stored as float for all
/// three pixel types (uint8 and uint16 embed exactly); layout is
/// band-sequential, row-major. Values are immutable once constructed.
class RasterGrid {
 public:
  RasterGrid() = default;
  RasterGrid(RasterFrame frame, int bands, DataType dtype, std::vector<float> values,
             std::optional<float> nodata = std::nullopt);

  static RasterGrid filled(RasterFrame frame, int bands, DataType dtype, float value,
                           std::optional<float> nodata = std::nullopt);

  int width() const { return frame_.width; }
  int height() const { return frame_.height; }
  int bands() const { return bands_; }
  DataType dtype() const { return dtype_; }
  const GeoTransform& transform() const { return frame_.transform; }
  const RasterFrame& frame() const { return frame_; }
  const std::optional<float>& nodata() const { return nodata_; }
  GeoBox extent() const { return frame_.extent(); }

  std::size_t band_size() const {
    return static_cast<std::size_t>(frame_.width) * static_cast<std::size_t>(frame_.height);
  }
  std::span<const float> values() const { return values_; }
  std::span<const float> band(int b) const;

  float at(int b, int row, int col) const {
    return values_[static_cast<std::size_t>(b) * band_size() +
                   static_cast<std::size_t>(row) * static_cast<std::size_t>(frame_.width) +
                   static_cast<std::size_t>(col)];
  }
  bool is_nodata(float v) const { return nodata_ && same_bits(v, *nodata_); }
  /// Finite and not nodata.
  bool is_valid(float v) const;
  /// All bands valid at (row, col).
  bool pixel_valid(int row, int col) const;

  /// Bitwise equality of every field and sample.
  bool identical(const RasterGrid& o) const;

 private:
  RasterFrame frame_;
  int bands_ = 0;
  DataType dtype_ = DataType::f32;
  std::vector<float> values_;
  std::optional<float> nodata_;
};

/// 0.2 degree processing cell. i counts columns eastward from -180,
/// j counts rows southward from +90.
struct GridCell {
  int i = 0;
  int j = 0;

  GeoBox bbox() const;
  std::string id() const;  // "{j}_{i}"
  static GridCell containing(double lon, double lat);

  auto operator<=>(const GridCell& o) const {
    if (auto c = j <=> o.j; c != 0) return c;
    return i <=> o.i;
  }
  bool operator==(const GridCell&) const = default;
};

/// 5 degree output tile keyed by its south-west corner.
struct TileSpec {
  int lat0 = 0;
  int lon0 = 0;

  GeoBox bbox() const;
  std::string id() const;  // "{lat0}_{lon0}"
  static TileSpec containing(double lon, double lat);

  auto operator<=>(const TileSpec&) const = default;
};

/// Pixels of r intersecting bbox, on r's own lattice.
RasterGrid crop_window(const RasterGrid& r, const GeoBox& bbox);

/// Nearest-neighbour composite. Earlier inputs win: pass the list most
/// recent first.
RasterGrid mosaic(std::span<const RasterGrid> rs, const GeoBox& target, double resolution_deg);
RasterGrid mosaic_onto(std::span<const RasterGrid> rs, const RasterFrame& frame);

/// Nearest-neighbour resample of a single raster onto another frame.
RasterGrid align_to(const RasterGrid& src, const RasterFrame& frame);

double pixel_area_m2(const RasterGrid& r, int row);
double pixel_area_m2(const GeoTransform& t, int row);

}  // namespace gbm
