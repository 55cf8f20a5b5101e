#pragma once

#include "gbm/raster.hpp"

namespace gbm {

inline constexpr int kDefaultSearchWindow = 16;

/// Integer translation that moves the mask onto the image. Positive dx
/// moves the mask east, positive dy moves it south.
struct Shift {
  int dx = 0;
  int dy = 0;
  double score = 0.0;
};

/// 0.299 R + 0.587 G + 0.114 B from the first three bands.
RasterGrid to_grayscale(const RasterGrid& r);

RasterGrid sobel_magnitude(const RasterGrid& r);

/// Exhaustive zero-normalized cross-correlation over [-w, w]^2. Ties go to
/// the smallest |dx|+|dy|, then smallest dy, then smallest dx. Scores within
/// 1e-12 of each other count as tied.
Shift estimate_shift(const RasterGrid& image_edges, const RasterGrid& mask_edges,
                     int search_window = kDefaultSearchWindow);

/// Translate content by (dx, dy) in pixel space; vacated pixels become
/// nodata and the transform is left untouched.
RasterGrid apply_shift(const RasterGrid& r, const Shift& s);

}  // namespace gbm
