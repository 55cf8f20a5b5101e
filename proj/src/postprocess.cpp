#include "gbm/postprocess.hpp"

#include <vector>

#include "gbm/error.hpp"

namespace gbm {

RasterGrid area_aware_filter(const RasterGrid& buildings, const RasterGrid& urban,
                             const RasterGrid& landcover, const FilterRules& rules) {
  auto aligned = [&](const RasterGrid& r) {
    return r.width() == buildings.width() && r.height() == buildings.height();
  };
  if (!aligned(urban) || !aligned(landcover)) {
    throw Error(Errc::dims_mismatch, "filter layers are not aligned with the building mask");
  }
  const auto b = buildings.band(0), u = urban.band(0), lc = landcover.band(0);
  std::vector<float> out(b.begin(), b.end());
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!buildings.is_valid(b[k]) || b[k] == 0.0F) continue;
    if (!landcover.is_valid(lc[k])) continue;
    const int cls = static_cast<int>(lc[k]);
    if (cls < kCropland || cls > kCloud || static_cast<float>(cls) != lc[k]) {
      throw Error(Errc::class_out_of_range, "land-cover class outside {1..9}");
    }
    const bool is_urban = !urban.is_valid(u[k]) || u[k] != 0.0F;
    const bool keep = is_urban ? rules.urban_remove.count(cls) == 0
                               : rules.nonurban_keep.count(cls) != 0;
    if (!keep) out[k] = 0.0F;
  }
  return RasterGrid(buildings.frame(), 1, buildings.dtype(), std::move(out), buildings.nodata());
}

}  // namespace gbm
