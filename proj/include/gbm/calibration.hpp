#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "gbm/raster.hpp"

namespace gbm {

inline constexpr int kPatchSize = 256;
/// Nodata written into calibrated rasters; outside the [0, 1] output range.
inline constexpr float kCalibratedNodata = -9999.0F;

struct BandStats {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double clip_lo = 0.0;
  double clip_hi = 0.0;
};

enum class CalibrationMode { per_scope, per_patch };

CalibrationMode parse_calibration_mode(std::string_view s);
std::string_view calibration_mode_name(CalibrationMode m) noexcept;

/// Linear-interpolated quantile at fractional rank p * (n - 1) of the
/// sorted samples.
double quantile(std::span<const double> sorted, double p);

/// Q1/Q3 of the finite samples that are not nodata; clip_hi = Q3 + 1.5 IQR.
BandStats band_quantiles(std::span<const float> samples,
                         std::optional<float> nodata = std::nullopt);

/// Clamp each band to [0, clip_hi] and divide by clip_hi. In per-patch mode
/// the statistics are recomputed on every patch of the lattice anchored at
/// the raster origin (partial edge patches included). Output is float32
/// with nodata = kCalibratedNodata wherever the input was invalid.
RasterGrid calibrate(const RasterGrid& r, CalibrationMode mode, int patch_size = kPatchSize);

}  // namespace gbm
