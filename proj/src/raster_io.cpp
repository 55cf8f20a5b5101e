#include "gbm/raster_io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>

#include "gbm/error.hpp"

namespace gbm {

namespace fs = std::filesystem;

namespace {

constexpr ttag_t kTagModelPixelScale = 33550;
constexpr ttag_t kTagModelTiepoint = 33922;
constexpr ttag_t kTagGeoKeyDirectory = 34735;
constexpr ttag_t kTagGdalNodata = 42113;

constexpr std::uint16_t kGeoKeyModelType = 1024;
constexpr std::uint16_t kGeoKeyRasterType = 1025;
constexpr std::uint16_t kGeoKeyGeographicType = 2048;
constexpr std::uint16_t kGeoKeyAngularUnits = 2054;
constexpr std::uint16_t kModelTypeGeographic = 2;
constexpr std::uint16_t kRasterPixelIsArea = 1;
constexpr std::uint16_t kRasterPixelIsPoint = 2;
constexpr std::uint16_t kGcsWgs84 = 4326;
constexpr std::uint16_t kAngularDegree = 9102;

char kNamePixelScale[] = "ModelPixelScaleTag";
char kNameTiepoint[] = "ModelTiepointTag";
char kNameGeoKeys[] = "GeoKeyDirectoryTag";
char kNameNodata[] = "GDALNoDataValue";

const TIFFFieldInfo kGeoFields[] = {
    {kTagModelPixelScale, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     kNamePixelScale},
    {kTagModelTiepoint, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     kNameTiepoint},
    {kTagGeoKeyDirectory, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_SHORT, FIELD_CUSTOM, 1, 1,
     kNameGeoKeys},
    {kTagGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, kNameNodata},
};

TIFFExtendProc g_parent_extender = nullptr;

void geo_tag_extender(TIFF* tif) {
  TIFFMergeFieldInfo(tif, kGeoFields, static_cast<uint32_t>(std::size(kGeoFields)));
  if (g_parent_extender) g_parent_extender(tif);
}

thread_local std::string t_tiff_error;

void tiff_error_handler(const char* module, const char* fmt, va_list ap) {
  std::array<char, 512> buf{};
  std::vsnprintf(buf.data(), buf.size(), fmt, ap);
  t_tiff_error = std::string(module ? module : "libtiff") + ": " + buf.data();
}

void install_libtiff_hooks() {
  static std::once_flag once;
  std::call_once(once, [] {
    g_parent_extender = TIFFSetTagExtender(geo_tag_extender);
    TIFFSetErrorHandler(tiff_error_handler);
    TIFFSetWarningHandler(nullptr);
  });
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

std::size_t sample_bytes(DataType t) {
  switch (t) {
    case DataType::u8: return 1;
    case DataType::u16: return 2;
    case DataType::f32: return 4;
  }
  return 4;
}

std::string format_nodata(float v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.9g", static_cast<double>(v));
  return buf.data();
}

void check_representable(const RasterGrid& r) {
  if (r.dtype() == DataType::f32) return;
  for (float v : r.values()) {
    if (!representable(r.dtype(), v)) {
      throw Error(Errc::dtype_mismatch, "sample " + format_nodata(v) + " does not fit " +
                                            std::string(dtype_name(r.dtype())));
    }
  }
  if (r.nodata() && !representable(r.dtype(), *r.nodata())) {
    throw Error(Errc::dtype_mismatch, "nodata does not fit the pixel type");
  }
}

// Encode one sample little-endian into dst.
void put_sample(DataType t, float v, unsigned char* dst) {
  switch (t) {
    case DataType::u8:
      dst[0] = static_cast<unsigned char>(v);
      return;
    case DataType::u16: {
      const auto u = static_cast<std::uint16_t>(v);
      dst[0] = static_cast<unsigned char>(u & 0xFFU);
      dst[1] = static_cast<unsigned char>(u >> 8U);
      return;
    }
    case DataType::f32: {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int k = 0; k < 4; ++k) dst[k] = static_cast<unsigned char>((u >> (8U * k)) & 0xFFU);
      return;
    }
  }
}

float get_sample(DataType t, const unsigned char* src) {
  switch (t) {
    case DataType::u8: return static_cast<float>(src[0]);
    case DataType::u16:
      return static_cast<float>(static_cast<std::uint16_t>(src[0] | (src[1] << 8U)));
    case DataType::f32: {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(src[k]) << (8U * k);
      return std::bit_cast<float>(u);
    }
  }
  return 0.0F;
}

// libtiff hands back samples in host order.
float get_native_sample(DataType t, const unsigned char* src) {
  switch (t) {
    case DataType::u8: return static_cast<float>(src[0]);
    case DataType::u16: {
      std::uint16_t u = 0;
      std::memcpy(&u, src, 2);
      return static_cast<float>(u);
    }
    case DataType::f32: {
      float f = 0;
      std::memcpy(&f, src, 4);
      return f;
    }
  }
  return 0.0F;
}

void put_native_sample(DataType t, float v, unsigned char* dst) {
  switch (t) {
    case DataType::u8:
      dst[0] = static_cast<unsigned char>(v);
      return;
    case DataType::u16: {
      const auto u = static_cast<std::uint16_t>(v);
      std::memcpy(dst, &u, 2);
      return;
    }
    case DataType::f32:
      std::memcpy(dst, &v, 4);
      return;
  }
}

}  // namespace

void write_geotiff(const RasterGrid& r, const fs::path& path, const WriteOptions& options) {
  install_libtiff_hooks();
  check_representable(r);
  if (r.bands() > 4) throw Error(Errc::band_mismatch, "GeoTIFF writer supports 1-4 bands");
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());

  TiffPtr tif(TIFFOpen(path.string().c_str(), "w"));
  if (!tif) throw Error(Errc::io, "cannot create " + path.string() + " (" + t_tiff_error + ")");

  const auto width = static_cast<uint32_t>(r.width());
  const auto height = static_cast<uint32_t>(r.height());
  const std::size_t bytes = sample_bytes(r.dtype());
  TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, static_cast<uint16_t>(r.bands()));
  TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, static_cast<uint16_t>(8 * bytes));
  TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT,
               r.dtype() == DataType::f32 ? SAMPLEFORMAT_IEEEFP : SAMPLEFORMAT_UINT);
  TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
  TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  if (r.bands() > 1) {
    std::vector<uint16_t> extra(static_cast<std::size_t>(r.bands() - 1), EXTRASAMPLE_UNSPECIFIED);
    TIFFSetField(tif.get(), TIFFTAG_EXTRASAMPLES, static_cast<uint16_t>(extra.size()), extra.data());
  }
  TIFFSetField(tif.get(), TIFFTAG_COMPRESSION,
               options.compression == Compression::deflate ? COMPRESSION_ADOBE_DEFLATE
                                                           : COMPRESSION_NONE);
  const uint32_t rows_per_strip =
      std::max<uint32_t>(1, static_cast<uint32_t>(65536 / std::max<std::size_t>(1, width * bytes)));
  TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, std::min(rows_per_strip, height));

  const GeoTransform& t = r.transform();
  std::array<double, 3> scale{t.pixel_width, t.pixel_height, 0.0};
  std::array<double, 6> tiepoint{0.0, 0.0, 0.0, t.origin_lon, t.origin_lat, 0.0};
  std::array<uint16_t, 20> geokeys{1, 1, 0, 4,
                                   kGeoKeyModelType, 0, 1, kModelTypeGeographic,
                                   kGeoKeyRasterType, 0, 1, kRasterPixelIsArea,
                                   kGeoKeyGeographicType, 0, 1, kGcsWgs84,
                                   kGeoKeyAngularUnits, 0, 1, kAngularDegree};
  TIFFSetField(tif.get(), kTagModelPixelScale, 3, scale.data());
  TIFFSetField(tif.get(), kTagModelTiepoint, 6, tiepoint.data());
  TIFFSetField(tif.get(), kTagGeoKeyDirectory, static_cast<uint16_t>(geokeys.size()),
               geokeys.data());
  if (r.nodata()) {
    const std::string nd = format_nodata(*r.nodata());
    TIFFSetField(tif.get(), kTagGdalNodata, nd.c_str());
  }

  const uint32_t rps = std::min(rows_per_strip, height);
  std::vector<unsigned char> buf;
  for (int b = 0; b < r.bands(); ++b) {
    for (uint32_t row0 = 0; row0 < height; row0 += rps) {
      const uint32_t rows = std::min(rps, height - row0);
      buf.assign(static_cast<std::size_t>(rows) * width * bytes, 0);
      for (uint32_t rr = 0; rr < rows; ++rr) {
        for (uint32_t c = 0; c < width; ++c) {
          put_native_sample(r.dtype(), r.at(b, static_cast<int>(row0 + rr), static_cast<int>(c)),
                            buf.data() + (static_cast<std::size_t>(rr) * width + c) * bytes);
        }
      }
      const tstrip_t strip = TIFFComputeStrip(tif.get(), row0, static_cast<uint16_t>(b));
      if (TIFFWriteEncodedStrip(tif.get(), strip, buf.data(), static_cast<tmsize_t>(buf.size())) <
          0) {
        throw Error(Errc::io, "failed writing " + path.string() + " (" + t_tiff_error + ")");
      }
    }
  }
  if (!TIFFWriteDirectory(tif.get())) {
    throw Error(Errc::io, "failed writing directory of " + path.string());
  }
}

RasterGrid read_geotiff(const fs::path& path) {
  install_libtiff_hooks();
  if (!fs::exists(path)) throw Error(Errc::io, "no such raster: " + path.string());
  TiffPtr tif(TIFFOpen(path.string().c_str(), "r"));
  if (!tif) {
    throw Error(Errc::malformed_header, "not a TIFF: " + path.string() + " (" + t_tiff_error + ")");
  }
  if (TIFFIsTiled(tif.get())) {
    throw Error(Errc::malformed_header, "tiled TIFF layout is not supported: " + path.string());
  }

  uint32_t width = 0, height = 0;
  uint16_t spp = 1, bps = 1, fmt = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  if (!TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width) ||
      !TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height)) {
    throw Error(Errc::malformed_header, "TIFF without dimensions: " + path.string());
  }
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &fmt);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);

  DataType dtype;
  if (fmt == SAMPLEFORMAT_UINT && bps == 8) {
    dtype = DataType::u8;
  } else if (fmt == SAMPLEFORMAT_UINT && bps == 16) {
    dtype = DataType::u16;
  } else if (fmt == SAMPLEFORMAT_IEEEFP && bps == 32) {
    dtype = DataType::f32;
  } else {
    throw Error(Errc::dtype_mismatch, "unsupported sample layout in " + path.string());
  }
  if (spp < 1 || spp > 4) throw Error(Errc::band_mismatch, "GeoTIFF reader supports 1-4 bands");

  GeoTransform t;
  uint16_t count = 0;
  double* scale = nullptr;
  double* tie = nullptr;
  uint16_t* keys = nullptr;
  if (TIFFGetField(tif.get(), kTagModelPixelScale, &count, &scale) && count >= 2) {
    t.pixel_width = scale[0];
    t.pixel_height = scale[1];
  }
  if (TIFFGetField(tif.get(), kTagModelTiepoint, &count, &tie) && count >= 6) {
    t.origin_lon = tie[3] - tie[0] * t.pixel_width;
    t.origin_lat = tie[4] + tie[1] * t.pixel_height;
  }
  if (TIFFGetField(tif.get(), kTagGeoKeyDirectory, &count, &keys) && count >= 4) {
    const int nkeys = keys[3];
    for (int k = 0; k < nkeys && 4 + 4 * k + 3 < count; ++k) {
      const uint16_t id = keys[4 + 4 * k];
      const uint16_t loc = keys[4 + 4 * k + 1];
      const uint16_t val = keys[4 + 4 * k + 3];
      if (loc != 0) continue;
      if (id == kGeoKeyModelType && val != kModelTypeGeographic) {
        throw Error(Errc::malformed_header, "only geographic CRSs are supported: " + path.string());
      }
      if (id == kGeoKeyRasterType && val == kRasterPixelIsPoint) {
        t.origin_lon -= 0.5 * t.pixel_width;
        t.origin_lat += 0.5 * t.pixel_height;
      }
    }
  }

  std::optional<float> nodata;
  char* nd = nullptr;
  if (TIFFGetField(tif.get(), kTagGdalNodata, &nd) && nd != nullptr) {
    const std::string s(nd);
    if (s == "nan" || s == "NaN" || s == "NAN") {
      nodata = std::numeric_limits<float>::quiet_NaN();
    } else {
      char* end = nullptr;
      const float v = std::strtof(s.c_str(), &end);
      if (end == s.c_str()) throw Error(Errc::malformed_header, "unparseable nodata '" + s + "'");
      nodata = v;
    }
  }

  const std::size_t bytes = sample_bytes(dtype);
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  std::vector<float> values(plane * spp);
  const tstrip_t nstrips = TIFFNumberOfStrips(tif.get());
  const tmsize_t strip_size = TIFFStripSize(tif.get());
  uint32_t rps = height;
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rps);
  rps = std::min(rps, height);
  std::vector<unsigned char> buf(static_cast<std::size_t>(strip_size));
  const uint32_t strips_per_band = (height + rps - 1) / rps;

  for (tstrip_t s = 0; s < nstrips; ++s) {
    const tmsize_t got = TIFFReadEncodedStrip(tif.get(), s, buf.data(), strip_size);
    if (got < 0) {
      throw Error(Errc::truncated_payload,
                  "cannot decode strip of " + path.string() + " (" + t_tiff_error + ")");
    }
    if (planar == PLANARCONFIG_SEPARATE) {
      const uint32_t band = s / strips_per_band;
      const uint32_t row0 = (s % strips_per_band) * rps;
      const uint32_t rows = std::min(rps, height - row0);
      if (static_cast<std::size_t>(got) < static_cast<std::size_t>(rows) * width * bytes) {
        throw Error(Errc::truncated_payload, "short strip in " + path.string());
      }
      for (uint32_t rr = 0; rr < rows; ++rr) {
        for (uint32_t c = 0; c < width; ++c) {
          values[band * plane + static_cast<std::size_t>(row0 + rr) * width + c] = get_native_sample(
              dtype, buf.data() + (static_cast<std::size_t>(rr) * width + c) * bytes);
        }
      }
    } else {
      const uint32_t row0 = s * rps;
      const uint32_t rows = std::min(rps, height - row0);
      if (static_cast<std::size_t>(got) < static_cast<std::size_t>(rows) * width * spp * bytes) {
        throw Error(Errc::truncated_payload, "short strip in " + path.string());
      }
      for (uint32_t rr = 0; rr < rows; ++rr) {
        for (uint32_t c = 0; c < width; ++c) {
          for (uint16_t b = 0; b < spp; ++b) {
            values[b * plane + static_cast<std::size_t>(row0 + rr) * width + c] =
                get_native_sample(
                    dtype, buf.data() + ((static_cast<std::size_t>(rr) * width + c) * spp + b) * bytes);
          }
        }
      }
    }
  }

  RasterFrame frame{t, static_cast<int>(width), static_cast<int>(height)};
  return RasterGrid(frame, spp, dtype, std::move(values), nodata);
}

void write_raw(const RasterGrid& r, const fs::path& header, const fs::path& payload) {
  check_representable(r);
  nlohmann::json h;
  h["width"] = r.width();
  h["height"] = r.height();
  h["bands"] = r.bands();
  h["dtype"] = std::string(dtype_name(r.dtype()));
  if (!r.nodata()) {
    h["nodata"] = nullptr;
  } else if (std::isnan(*r.nodata())) {
    h["nodata"] = "nan";
  } else {
    h["nodata"] = static_cast<double>(*r.nodata());
  }
  const GeoTransform& t = r.transform();
  h["transform"] = {t.origin_lon, t.origin_lat, t.pixel_width, t.pixel_height};

  if (!header.parent_path().empty()) fs::create_directories(header.parent_path());
  if (!payload.parent_path().empty()) fs::create_directories(payload.parent_path());
  std::ofstream hs(header, std::ios::binary);
  if (!hs) throw Error(Errc::io, "cannot create " + header.string());
  hs << h.dump(2) << '\n';

  const std::size_t bytes = sample_bytes(r.dtype());
  std::vector<unsigned char> buf(r.values().size() * bytes);
  for (std::size_t k = 0; k < r.values().size(); ++k) {
    put_sample(r.dtype(), r.values()[k], buf.data() + k * bytes);
  }
  std::ofstream ps(payload, std::ios::binary);
  if (!ps) throw Error(Errc::io, "cannot create " + payload.string());
  ps.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!ps) throw Error(Errc::io, "failed writing " + payload.string());
}

RasterGrid read_raw(const fs::path& header, const fs::path& payload) {
  std::ifstream hs(header, std::ios::binary);
  if (!hs) throw Error(Errc::io, "cannot open " + header.string());
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_header, header.string() + ": " + e.what());
  }

  int width = 0, height = 0, bands = 0;
  std::string dtype_str;
  GeoTransform t;
  std::optional<float> nodata;
  try {
    if (!h.is_object()) throw Error(Errc::malformed_header, "header is not an object");
    width = h.at("width").get<int>();
    height = h.at("height").get<int>();
    bands = h.at("bands").get<int>();
    dtype_str = h.at("dtype").get<std::string>();
    const auto& tr = h.at("transform");
    if (!tr.is_array() || tr.size() != 4) {
      throw Error(Errc::malformed_header, "transform must hold 4 numbers");
    }
    t = GeoTransform{tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>(),
                     tr[3].get<double>()};
    const auto& nd = h.at("nodata");
    if (nd.is_string()) {
      const auto s = nd.get<std::string>();
      if (s != "nan" && s != "NaN") throw Error(Errc::malformed_header, "nodata string must be nan");
      nodata = std::numeric_limits<float>::quiet_NaN();
    } else if (!nd.is_null()) {
      nodata = static_cast<float>(nd.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_header, header.string() + ": " + e.what());
  }
  if (width <= 0 || height <= 0 || bands <= 0) {
    throw Error(Errc::malformed_header, header.string() + ": non-positive dimensions");
  }
  if (!(t.pixel_width > 0.0) || !(t.pixel_height > 0.0)) {
    throw Error(Errc::malformed_header, header.string() + ": non-positive pixel size");
  }
  const DataType dtype = parse_dtype(dtype_str);

  const std::size_t bytes = sample_bytes(dtype);
  const std::size_t n = static_cast<std::size_t>(width) * height * bands;
  std::error_code ec;
  const auto size = fs::file_size(payload, ec);
  if (ec) throw Error(Errc::io, "cannot open payload " + payload.string());
  if (size < n * bytes) {
    throw Error(Errc::truncated_payload, payload.string() + ": expected " + std::to_string(n * bytes) +
                                             " bytes, found " + std::to_string(size));
  }
  if (size > n * bytes) {
    throw Error(Errc::malformed_header, payload.string() + ": payload larger than header declares");
  }
  std::vector<unsigned char> buf(n * bytes);
  std::ifstream ps(payload, std::ios::binary);
  ps.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!ps) throw Error(Errc::truncated_payload, "short read on " + payload.string());

  std::vector<float> values(n);
  for (std::size_t k = 0; k < n; ++k) values[k] = get_sample(dtype, buf.data() + k * bytes);
  return RasterGrid(RasterFrame{t, width, height}, bands, dtype, std::move(values), nodata);
}

RasterGrid read_raster(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".tif" || ext == ".tiff") return read_geotiff(path);
  if (ext == ".json") return read_raw(path, fs::path(path).replace_extension(".bin"));
  if (ext == ".bin") return read_raw(fs::path(path).replace_extension(".json"), path);
  throw Error(Errc::io, "unrecognised raster extension: " + path.string());
}

void write_raster(const RasterGrid& r, const fs::path& path, const WriteOptions& options) {
  const std::string ext = lower_ext(path);
  if (ext == ".tif" || ext == ".tiff") return write_geotiff(r, path, options);
  if (ext == ".json") return write_raw(r, path, fs::path(path).replace_extension(".bin"));
  if (ext == ".bin") return write_raw(r, fs::path(path).replace_extension(".json"), path);
  throw Error(Errc::io, "unrecognised raster extension: " + path.string());
}

}  // namespace gbm
