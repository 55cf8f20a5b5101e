#include "gbm/coregister.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

#include "gbm/error.hpp"
#include "gbm/kernels.hpp"

namespace gbm {

namespace {

struct Plane {
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  int width = 0;
  int height = 0;

  kernels::PlaneView view() const { return {values, valid, width, height}; }
};

Plane plane_of(const RasterGrid& r) {
  Plane p;
  p.width = r.width();
  p.height = r.height();
  const auto band = r.band(0);
  p.values.assign(band.begin(), band.end());
  p.valid.resize(band.size());
  for (std::size_t k = 0; k < band.size(); ++k) p.valid[k] = r.is_valid(band[k]) ? 1 : 0;
  return p;
}

bool has_variance(const Plane& p) {
  bool seen = false;
  float first = 0.0F;
  for (std::size_t k = 0; k < p.values.size(); ++k) {
    if (!p.valid[k]) continue;
    if (!seen) {
      first = p.values[k];
      seen = true;
    } else if (p.values[k] != first) {
      return true;
    }
  }
  return false;
}

constexpr double kTieTolerance = 1e-12;

}  // namespace

RasterGrid to_grayscale(const RasterGrid& r) {
  if (r.bands() < 3) throw Error(Errc::too_few_bands, "grayscale conversion needs 3 bands");
  const std::size_t plane = r.band_size();
  const float nd = r.nodata().value_or(default_nodata(DataType::f32));
  std::vector<float> out(plane);
  const auto red = r.band(0), green = r.band(1), blue = r.band(2);
  for (std::size_t k = 0; k < plane; ++k) {
    if (!r.is_valid(red[k]) || !r.is_valid(green[k]) || !r.is_valid(blue[k])) {
      out[k] = nd;
      continue;
    }
    out[k] = static_cast<float>(0.299 * red[k] + 0.587 * green[k] + 0.114 * blue[k]);
  }
  return RasterGrid(r.frame(), 1, DataType::f32, std::move(out), nd);
}

RasterGrid sobel_magnitude(const RasterGrid& r) {
  if (r.width() < 3 || r.height() < 3) throw Error(Errc::too_small, "Sobel needs at least 3x3");
  const Plane in = plane_of(r);
  std::vector<float> out(in.values.size());
  std::vector<std::uint8_t> valid(in.values.size());
  kernels::omp::sobel(in.view(), out, valid);

  const float nd = r.nodata().value_or(default_nodata(DataType::f32));
  bool any_invalid = false;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!valid[k]) {
      out[k] = nd;
      any_invalid = true;
    }
  }
  std::optional<float> nodata = r.nodata();
  if (any_invalid) nodata = nd;
  return RasterGrid(r.frame(), 1, DataType::f32, std::move(out), nodata);
}

Shift estimate_shift(const RasterGrid& image_edges, const RasterGrid& mask_edges,
                     int search_window) {
  if (search_window < 0) throw Error(Errc::invalid_argument, "search window must be >= 0");
  if (image_edges.width() != mask_edges.width() || image_edges.height() != mask_edges.height()) {
    throw Error(Errc::dims_mismatch, "edge maps differ in size");
  }
  const Plane a = plane_of(image_edges);
  const Plane b = plane_of(mask_edges);
  if (!has_variance(a) || !has_variance(b)) {
    throw Error(Errc::degenerate_correlation, "flat edge map has no correlation peak");
  }

  const int side = 2 * search_window + 1;
  std::vector<double> scores(static_cast<std::size_t>(side) * side);
  kernels::omp::ncc_scores(a.view(), b.view(), search_window, scores);

  bool found = false;
  Shift best;
  auto better = [&](int dx, int dy, double s) {
    if (!found) return true;
    // Scores this close differ only by rounding in the overlap sums.
    if (std::abs(s - best.score) > kTieTolerance) return s > best.score;
    const int l1 = std::abs(dx) + std::abs(dy);
    const int bl1 = std::abs(best.dx) + std::abs(best.dy);
    if (l1 != bl1) return l1 < bl1;
    if (dy != best.dy) return dy < best.dy;
    return dx < best.dx;
  };
  for (int dy = -search_window; dy <= search_window; ++dy) {
    for (int dx = -search_window; dx <= search_window; ++dx) {
      const double s =
          scores[static_cast<std::size_t>(dy + search_window) * side + (dx + search_window)];
      if (std::isnan(s)) continue;
      if (better(dx, dy, s)) {
        best = Shift{dx, dy, s};
        found = true;
      }
    }
  }
  if (!found) throw Error(Errc::degenerate_correlation, "no lag with a defined correlation");
  return best;
}

RasterGrid apply_shift(const RasterGrid& r, const Shift& s) {
  if (std::abs(s.dx) >= r.width() || std::abs(s.dy) >= r.height()) {
    throw Error(Errc::out_of_range, "shift exceeds raster dimensions");
  }
  if (s.dx == 0 && s.dy == 0) return r;
  const float nd = r.nodata().value_or(default_nodata(r.dtype()));
  const int w = r.width(), h = r.height();
  const std::size_t plane = r.band_size();
  std::vector<float> out(plane * static_cast<std::size_t>(r.bands()), nd);
  for (int b = 0; b < r.bands(); ++b) {
    for (int y = 0; y < h; ++y) {
      const int sy = y - s.dy;
      if (sy < 0 || sy >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int sx = x - s.dx;
        if (sx < 0 || sx >= w) continue;
        out[b * plane + static_cast<std::size_t>(y) * w + x] = r.at(b, sy, sx);
      }
    }
  }
  return RasterGrid(r.frame(), r.bands(), r.dtype(), std::move(out), nd);
}

}  // namespace gbm
