#pragma once

#include <set>

#include "gbm/raster.hpp"

namespace gbm {

enum LandCover : int {
  kCropland = 1,
  kForest = 2,
  kGrass = 3,
  kShrub = 4,
  kWater = 5,
  kImpervious = 6,
  kBareLand = 7,
  kSnow = 8,
  kCloud = 9,
};

/// Inside urban areas a building pixel is removed when its land-cover class
/// is in urban_remove; outside, it survives only when its class is in
/// nonurban_keep.
struct FilterRules {
  std::set<int> urban_remove{kCropland, kGrass, kShrub};
  std::set<int> nonurban_keep{kImpervious};
};

/// Removes false alarms; never adds building pixels. Nodata land cover (or
/// nodata urban status) gives no evidence and keeps the pixel; urban nodata
/// is treated as urban. All three rasters must share one frame; use
/// align_to() for coarser layers first.
RasterGrid area_aware_filter(const RasterGrid& buildings, const RasterGrid& urban,
                             const RasterGrid& landcover, const FilterRules& rules = {});

}  // namespace gbm
