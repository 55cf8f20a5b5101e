#include "gbm/labelgen.hpp"

#include <cmath>

#include "gbm/error.hpp"
#include "gbm/kernels.hpp"

namespace gbm {

RasterGrid rasterize(const PolygonSet& polygons, const RasterFrame& frame) {
  if (!(frame.transform.pixel_width > 0.0) || !(frame.transform.pixel_height > 0.0)) {
    throw Error(Errc::invalid_argument, "frame resolution must be positive");
  }
  validate(polygons);
  std::vector<float> out(static_cast<std::size_t>(frame.width) * frame.height, 0.0F);
  for (const Polygon& p : polygons.polygons) {
    for_each_pixel_inside(p, frame, [&](int row, int col) {
      out[static_cast<std::size_t>(row) * frame.width + col] = 1.0F;
    });
  }
  return RasterGrid(frame, 1, DataType::u8, std::move(out));
}

RasterGrid signed_distance(const RasterGrid& mask) {
  const int w = mask.width(), h = mask.height();
  const std::size_t n = mask.band_size();
  const auto band = mask.band(0);
  std::vector<std::uint8_t> inside(n), outside(n);
  std::size_t count_in = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const bool b = mask.is_valid(band[k]) && band[k] != 0.0F;
    inside[k] = b ? 1 : 0;
    outside[k] = b ? 0 : 1;
    count_in += b ? 1 : 0;
  }

  const auto saturation = static_cast<float>(w + h);
  std::vector<float> out(n);
  if (count_in == 0 || count_in == n) {
    std::fill(out.begin(), out.end(), count_in == 0 ? -saturation : saturation);
    return RasterGrid(mask.frame(), 1, DataType::f32, std::move(out));
  }

  std::vector<double> to_background(n), to_building(n);
  kernels::omp::squared_edt(outside, w, h, to_background);
  kernels::omp::squared_edt(inside, w, h, to_building);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = inside[k] ? static_cast<float>(std::sqrt(to_background[k]))
                       : -static_cast<float>(std::sqrt(to_building[k]));
  }
  return RasterGrid(mask.frame(), 1, DataType::f32, std::move(out));
}

std::uint8_t distance_label(double d, double beta) {
  if (!(beta > 0.0)) throw Error(Errc::invalid_argument, "beta must be positive");
  if (d == 0.0 || std::isnan(d)) return kLabelBoundary;
  const double bin = beta / 5.0;
  const double mag = std::min(std::abs(d), beta);
  const auto steps = static_cast<int>(std::ceil(mag / bin));
  const int label = d > 0.0 ? kLabelBoundary + steps : kLabelBoundary - steps;
  return static_cast<std::uint8_t>(std::clamp(label, 0, static_cast<int>(kLabelMax)));
}

RasterGrid truncate_and_bin(const RasterGrid& distance, double beta) {
  if (!(beta > 0.0)) throw Error(Errc::invalid_argument, "beta must be positive");
  const auto band = distance.band(0);
  std::vector<float> out(band.size());
  bool any_invalid = false;
  for (std::size_t k = 0; k < band.size(); ++k) {
    if (!distance.is_valid(band[k])) {
      out[k] = kLabelNodata;
      any_invalid = true;
      continue;
    }
    out[k] = distance_label(band[k], beta);
  }
  std::optional<float> nodata;
  if (any_invalid) nodata = kLabelNodata;
  return RasterGrid(distance.frame(), 1, DataType::u8, std::move(out), nodata);
}

std::string_view split_name(Split s) noexcept {
  return s == Split::train ? "train" : "validation";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31U);
}

RasterGrid window(const RasterGrid& r, int row, int col, int size) {
  RasterFrame f;
  const GeoTransform& t = r.transform();
  f.transform = GeoTransform{t.origin_lon + col * t.pixel_width, t.origin_lat - row * t.pixel_height,
                             t.pixel_width, t.pixel_height};
  f.width = size;
  f.height = size;
  std::vector<float> v;
  v.reserve(static_cast<std::size_t>(size) * size * r.bands());
  for (int b = 0; b < r.bands(); ++b) {
    for (int y = row; y < row + size; ++y) {
      for (int x = col; x < col + size; ++x) v.push_back(r.at(b, y, x));
    }
  }
  return RasterGrid(f, r.bands(), r.dtype(), std::move(v), r.nodata());
}

}  // namespace

Split split_for(std::uint64_t seed, std::size_t patch_index) {
  const std::uint64_t block = patch_index / 5;
  const std::uint64_t chosen = splitmix64(seed ^ splitmix64(block)) % 5;
  return (patch_index % 5) == chosen ? Split::validation : Split::train;
}

std::vector<PatchPair> cut_patches(const RasterGrid& image, const RasterGrid& labels,
                                   std::uint64_t seed, int patch_size) {
  if (image.width() != labels.width() || image.height() != labels.height()) {
    throw Error(Errc::dims_mismatch, "image and labels differ in size");
  }
  if (patch_size < 1) throw Error(Errc::invalid_argument, "patch size must be positive");
  if (image.width() < patch_size || image.height() < patch_size) {
    throw Error(Errc::too_small, "raster smaller than one patch");
  }
  const int nr = image.height() / patch_size;
  const int nc = image.width() / patch_size;
  std::vector<PatchPair> out;
  out.reserve(static_cast<std::size_t>(nr) * nc);
  for (int pr = 0; pr < nr; ++pr) {
    for (int pc = 0; pc < nc; ++pc) {
      PatchPair p;
      p.id = out.size();
      p.row = pr * patch_size;
      p.col = pc * patch_size;
      p.split = split_for(seed, p.id);
      p.image = window(image, p.row, p.col, patch_size);
      p.labels = window(labels, p.row, p.col, patch_size);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace gbm
