#pragma once

#include <filesystem>

#include "gbm/raster.hpp"

namespace gbm {

enum class Compression { none, deflate };

struct WriteOptions {
  Compression compression = Compression::deflate;
};

/// Reads a GeoTIFF (`.tif`, `.tiff`) or the raw fixture format (`.json`
/// header with a sibling `.bin` payload; either path may be given).
RasterGrid read_raster(const std::filesystem::path& path);

/// Writes by extension, same rules as read_raster. Creates parent
/// directories. Samples must be representable in the raster's dtype.
void write_raster(const RasterGrid& r, const std::filesystem::path& path,
                  const WriteOptions& options = {});

RasterGrid read_geotiff(const std::filesystem::path& path);
void write_geotiff(const RasterGrid& r, const std::filesystem::path& path,
                   const WriteOptions& options = {});

/// Raw fixture format: `header` is JSON
/// `{width, height, bands, dtype, nodata, transform:[lon, lat, pw, ph]}`,
/// `payload` is row-major, band-sequential, little-endian samples.
RasterGrid read_raw(const std::filesystem::path& header, const std::filesystem::path& payload);
void write_raw(const RasterGrid& r, const std::filesystem::path& header,
               const std::filesystem::path& payload);

}  // namespace gbm
