#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "gbm/geometry.hpp"
#include "gbm/raster.hpp"

namespace gbm {

inline constexpr double kDefaultBeta = 10.0;
inline constexpr std::uint8_t kLabelBoundary = 5;
inline constexpr std::uint8_t kLabelMax = 10;
inline constexpr float kLabelNodata = 255.0F;

/// uint8 raster, 1 where a pixel center lies inside any polygon.
RasterGrid rasterize(const PolygonSet& polygons, const RasterFrame& frame);

/// Signed Euclidean distance between pixel centers: positive inside
/// buildings (distance to the nearest background pixel), negative outside
/// (distance to the nearest building pixel). Masks without one of the two
/// classes saturate at +/-(width + height). Nodata counts as background.
RasterGrid signed_distance(const RasterGrid& mask);

/// Truncated signed-distance class in {0..10}; values above 5 are
/// building interior. The bin width is beta / 5.
std::uint8_t distance_label(double d, double beta = kDefaultBeta);
RasterGrid truncate_and_bin(const RasterGrid& distance, double beta = kDefaultBeta);

enum class Split { train, validation };
std::string_view split_name(Split s) noexcept;

/// Split of a patch as a pure function of (seed, index): each run of five
/// consecutive indices holds exactly one validation patch, placed by a
/// seeded hash, which keeps every prefix within one patch of 80/20.
Split split_for(std::uint64_t seed, std::size_t patch_index);

struct PatchPair {
  std::size_t id = 0;
  int row = 0;  // pixel offset of the patch's top-left corner
  int col = 0;
  Split split = Split::train;
  RasterGrid image;
  RasterGrid labels;
};

/// Non-overlapping patch lattice anchored at the origin; trailing margins
/// are dropped. Patches are numbered row-major.
std::vector<PatchPair> cut_patches(const RasterGrid& image, const RasterGrid& labels,
                                   std::uint64_t seed, int patch_size = 256);

}  // namespace gbm
