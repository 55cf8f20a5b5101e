#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an
// OpenMP variant with the same signature; the OpenMP variants must produce
// bit-identical output and are what the library calls. The serial versions
// are kept for tests and the benchmark.

#include <cstdint>
#include <limits>
#include <span>

namespace gbm::kernels {

/// Pixel state used by vote and block kernels.
inline constexpr std::uint8_t kNo = 0;
inline constexpr std::uint8_t kYes = 1;
inline constexpr std::uint8_t kAbstain = 2;

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Single-band float plane with a validity flag per pixel.
struct PlaneView {
  std::span<const float> values;
  std::span<const std::uint8_t> valid;
  int width = 0;
  int height = 0;
};

#define GBM_KERNEL_DECLS                                                                         \
  /* Exact squared Euclidean distance from each pixel center to the nearest pixel with          \
     target != 0; kUnreachable when there is none. */                                            \
  void squared_edt(std::span<const std::uint8_t> target, int width, int height,                  \
                   std::span<double> out);                                                       \
  /* 3x3 Sobel gradient magnitude with replicated borders. An output pixel is invalid when any   \
     input in its (clamped) neighbourhood is invalid. */                                         \
  void sobel(const PlaneView& in, std::span<float> out, std::span<std::uint8_t> out_valid);      \
  /* Zero-normalized cross-correlation of fixed(x, y) against moving(x - dx, y - dy) over the    \
     co-valid overlap, for every dx, dy in [-window, window]. out is indexed                     \
     (dy + window) * (2 * window + 1) + (dx + window); NaN where the overlap has no variance. */  \
  void ncc_scores(const PlaneView& fixed, const PlaneView& moving, int window,                   \
                  std::span<double> out);                                                        \
  /* Per pixel: kYes when at least threshold non-abstaining votes are kYes, kAbstain when every  \
     vote abstains, else kNo. */                                                                 \
  void vote(std::span<const std::span<const std::uint8_t>> votes, int threshold,                 \
            std::span<std::uint8_t> out);                                                        \
  /* Block-lattice counts anchored at (0, 0); trailing partial blocks are included. Blocks are   \
     row-major with ceil(width / block) columns. */                                              \
  void block_counts(std::span<const std::uint8_t> state, int width, int height, int block,      \
                    std::span<std::int64_t> built, std::span<std::int64_t> valid);

namespace serial {
GBM_KERNEL_DECLS
}  // namespace serial

namespace omp {
GBM_KERNEL_DECLS
}  // namespace omp

#undef GBM_KERNEL_DECLS

}  // namespace gbm::kernels
