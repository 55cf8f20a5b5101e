#include "gbm/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gbm/error.hpp"

namespace gbm {

CalibrationMode parse_calibration_mode(std::string_view s) {
  if (s == "per-scope") return CalibrationMode::per_scope;
  if (s == "per-patch") return CalibrationMode::per_patch;
  throw Error(Errc::invalid_argument, "calibration mode must be per-scope or per-patch");
}

std::string_view calibration_mode_name(CalibrationMode m) noexcept {
  return m == CalibrationMode::per_scope ? "per-scope" : "per-patch";
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(Errc::all_nodata, "quantile of an empty sample");
  const double rank = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

namespace {

// Order statistic pair needed for the quantile at p, found by selection
// rather than a full sort.
double select_quantile(std::vector<double>& v, double p) {
  const double rank = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (b - a) * frac;
}

BandStats stats_from(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::all_nodata, "no valid samples for quantile estimation");
  BandStats s;
  s.q1 = select_quantile(v, 0.25);
  s.q3 = select_quantile(v, 0.75);
  s.iqr = s.q3 - s.q1;
  s.clip_lo = 0.0;
  s.clip_hi = s.q3 + 1.5 * s.iqr;
  return s;
}

bool usable(float v, const std::optional<float>& nodata) {
  return std::isfinite(v) && !(nodata && same_bits(v, *nodata));
}

float scale(float v, const BandStats& s) {
  if (s.clip_hi <= 0.0) return 0.0F;
  const double c = std::clamp(static_cast<double>(v), s.clip_lo, s.clip_hi);
  return static_cast<float>(c / s.clip_hi);
}

}  // namespace

BandStats band_quantiles(std::span<const float> samples, std::optional<float> nodata) {
  std::vector<double> v;
  v.reserve(samples.size());
  for (float x : samples) {
    if (usable(x, nodata)) v.push_back(x);
  }
  return stats_from(std::move(v));
}

RasterGrid calibrate(const RasterGrid& r, CalibrationMode mode, int patch_size) {
  if (patch_size < 1) throw Error(Errc::invalid_argument, "patch size must be positive");
  const int w = r.width();
  const int h = r.height();
  const std::size_t plane = r.band_size();
  std::vector<float> out(plane * static_cast<std::size_t>(r.bands()), kCalibratedNodata);

  const int step_r = mode == CalibrationMode::per_scope ? h : patch_size;
  const int step_c = mode == CalibrationMode::per_scope ? w : patch_size;
  const int nr = (h + step_r - 1) / step_r;
  const int nc = (w + step_c - 1) / step_c;
  const int jobs = r.bands() * nr * nc;

  // Each (band, patch) job writes a disjoint region.
#pragma omp parallel for schedule(dynamic, 1)
  for (int job = 0; job < jobs; ++job) {
    const int b = job / (nr * nc);
    const int pr = (job / nc) % nr;
    const int pc = job % nc;
    const int r0 = pr * step_r, r1 = std::min(h, r0 + step_r);
    const int c0 = pc * step_c, c1 = std::min(w, c0 + step_c);
    const std::span<const float> band = r.band(b);

    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(r1 - r0) * (c1 - c0));
    for (int y = r0; y < r1; ++y) {
      for (int x = c0; x < c1; ++x) {
        const float s = band[static_cast<std::size_t>(y) * w + x];
        if (usable(s, r.nodata())) v.push_back(s);
      }
    }
    if (v.empty()) continue;  // all-nodata patch stays nodata
    const BandStats st = stats_from(std::move(v));
    for (int y = r0; y < r1; ++y) {
      for (int x = c0; x < c1; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        const float s = band[idx];
        if (usable(s, r.nodata())) out[b * plane + idx] = scale(s, st);
      }
    }
  }

  bool any_valid = false;
  for (int b = 0; b < r.bands() && !any_valid; ++b) {
    for (float s : r.band(b)) {
      if (usable(s, r.nodata())) {
        any_valid = true;
        break;
      }
    }
  }
  if (!any_valid) throw Error(Errc::all_nodata, "raster has no valid samples to calibrate");
  return RasterGrid(r.frame(), r.bands(), DataType::f32, std::move(out), kCalibratedNodata);
}

}  // namespace gbm
