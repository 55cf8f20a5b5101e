#pragma once

// Per-line bodies shared by the serial and OpenMP kernel drivers. Keeping
// one body per line is what makes the two drivers bit-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gbm/kernels.hpp"

namespace gbm::kernels::detail {

/// One-dimensional squared distance transform (lower envelope of
/// parabolas). f holds 0 at sites and kUnreachable elsewhere; the stride
/// lets the same body run over rows and columns.
inline void edt_line(const double* f, std::ptrdiff_t stride, int n, double* out,
                     std::ptrdiff_t out_stride, std::vector<int>& v, std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kUnreachable) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kUnreachable;
      z[1] = kUnreachable;
      continue;
    }
    // z[0] is -inf, so k never drops below zero.
    double s = 0.0;
    for (;;) {
      const int p = v[static_cast<std::size_t>(k)];
      const double fp = f[p * stride];
      s = ((fq + static_cast<double>(q) * q) - (fp + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kUnreachable;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * out_stride] = kUnreachable;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double dq = static_cast<double>(q - p);
    out[q * out_stride] = dq * dq + f[p * stride];
  }
}

inline void sobel_row(const PlaneView& in, int row, std::span<float> out,
                      std::span<std::uint8_t> out_valid) {
  const int w = in.width;
  const int h = in.height;
  auto clamp_r = [h](int r) { return std::clamp(r, 0, h - 1); };
  auto clamp_c = [w](int c) { return std::clamp(c, 0, w - 1); };
  for (int col = 0; col < w; ++col) {
    bool ok = true;
    double px[3][3];
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const std::size_t idx = static_cast<std::size_t>(clamp_r(row + dr)) * w + clamp_c(col + dc);
        ok = ok && in.valid[idx] != 0;
        px[dr + 1][dc + 1] = in.values[idx];
      }
    }
    const std::size_t o = static_cast<std::size_t>(row) * w + col;
    if (!ok) {
      out[o] = 0.0F;
      out_valid[o] = 0;
      continue;
    }
    const double gx = (px[0][2] + 2.0 * px[1][2] + px[2][2]) - (px[0][0] + 2.0 * px[1][0] + px[2][0]);
    const double gy = (px[2][0] + 2.0 * px[2][1] + px[2][2]) - (px[0][0] + 2.0 * px[0][1] + px[0][2]);
    out[o] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    out_valid[o] = 1;
  }
}

/// Score for a single lag. Two passes (means, then centered moments) keep
/// the identical-overlap case at 1 to within a few ulps.
inline double ncc_at(const PlaneView& a, const PlaneView& b, int dx, int dy) {
  const int x0 = std::max(0, dx);
  const int x1 = std::min(a.width, b.width + dx);
  const int y0 = std::max(0, dy);
  const int y1 = std::min(a.height, b.height + dy);
  if (x1 <= x0 || y1 <= y0) return std::nan("");

  double sa = 0.0, sb = 0.0;
  std::int64_t n = 0;
  for (int y = y0; y < y1; ++y) {
    const std::size_t ra = static_cast<std::size_t>(y) * a.width;
    const std::size_t rb = static_cast<std::size_t>(y - dy) * b.width;
    for (int x = x0; x < x1; ++x) {
      const std::size_t ia = ra + x;
      const std::size_t ib = rb + (x - dx);
      if (!a.valid[ia] || !b.valid[ib]) continue;
      sa += a.values[ia];
      sb += b.values[ib];
      ++n;
    }
  }
  if (n < 2) return std::nan("");
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (int y = y0; y < y1; ++y) {
    const std::size_t ra = static_cast<std::size_t>(y) * a.width;
    const std::size_t rb = static_cast<std::size_t>(y - dy) * b.width;
    for (int x = x0; x < x1; ++x) {
      const std::size_t ia = ra + x;
      const std::size_t ib = rb + (x - dx);
      if (!a.valid[ia] || !b.valid[ib]) continue;
      const double da = a.values[ia] - ma;
      const double db = b.values[ib] - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
  }
  // Relative floor: a constant overlap leaves only rounding residue.
  const double floor_a = 1e-24 * std::max(1.0, ma * ma) * static_cast<double>(n);
  const double floor_b = 1e-24 * std::max(1.0, mb * mb) * static_cast<double>(n);
  if (saa <= floor_a || sbb <= floor_b) return std::nan("");
  return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

inline std::uint8_t vote_pixel(std::span<const std::span<const std::uint8_t>> votes,
                               std::size_t idx, int threshold) {
  int yes = 0;
  int cast = 0;
  for (const auto& v : votes) {
    const std::uint8_t s = v[idx];
    if (s == kAbstain) continue;
    ++cast;
    yes += (s == kYes) ? 1 : 0;
  }
  if (cast == 0) return kAbstain;
  return yes >= threshold ? kYes : kNo;
}

inline void block_row(std::span<const std::uint8_t> state, int width, int height, int block,
                      int brow, std::span<std::int64_t> built, std::span<std::int64_t> valid) {
  const int bcols = (width + block - 1) / block;
  const int r0 = brow * block;
  const int r1 = std::min(height, r0 + block);
  for (int bc = 0; bc < bcols; ++bc) {
    const int c0 = bc * block;
    const int c1 = std::min(width, c0 + block);
    std::int64_t nb = 0, nv = 0;
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) {
        const std::uint8_t s = state[static_cast<std::size_t>(r) * width + c];
        if (s == kAbstain) continue;
        ++nv;
        nb += (s == kYes) ? 1 : 0;
      }
    }
    const std::size_t o = static_cast<std::size_t>(brow) * bcols + bc;
    built[o] = nb;
    valid[o] = nv;
  }
}

}  // namespace gbm::kernels::detail
