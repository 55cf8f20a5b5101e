#include <omp.h>

#include "gbm/kernels.hpp"
#include "kernels_detail.hpp"

namespace gbm::kernels::omp {

void squared_edt(std::span<const std::uint8_t> target, int width, int height,
                 std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(width) * height;
  std::vector<double> f(static_cast<std::size_t>(n));
  std::vector<double> cols(static_cast<std::size_t>(n));

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) f[k] = target[k] ? 0.0 : kUnreachable;

    std::vector<int> v;
    std::vector<double> z;
#pragma omp for schedule(static)
    for (int c = 0; c < width; ++c) {
      detail::edt_line(f.data() + c, width, height, cols.data() + c, width, v, z);
    }
#pragma omp for schedule(static)
    for (int r = 0; r < height; ++r) {
      const std::size_t o = static_cast<std::size_t>(r) * width;
      detail::edt_line(cols.data() + o, 1, width, out.data() + o, 1, v, z);
    }
  }
}

void sobel(const PlaneView& in, std::span<float> out, std::span<std::uint8_t> out_valid) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < in.height; ++r) detail::sobel_row(in, r, out, out_valid);
}

void ncc_scores(const PlaneView& fixed, const PlaneView& moving, int window,
                std::span<double> out) {
  const int side = 2 * window + 1;
  const int lags = side * side;
#pragma omp parallel for schedule(dynamic, 4)
  for (int k = 0; k < lags; ++k) {
    const int dy = k / side - window;
    const int dx = k % side - window;
    out[static_cast<std::size_t>(k)] = detail::ncc_at(fixed, moving, dx, dy);
  }
}

void vote(std::span<const std::span<const std::uint8_t>> votes, int threshold,
          std::span<std::uint8_t> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] =
        detail::vote_pixel(votes, static_cast<std::size_t>(k), threshold);
  }
}

void block_counts(std::span<const std::uint8_t> state, int width, int height, int block,
                  std::span<std::int64_t> built, std::span<std::int64_t> valid) {
  const int brows = (height + block - 1) / block;
#pragma omp parallel for schedule(static)
  for (int br = 0; br < brows; ++br) detail::block_row(state, width, height, block, br, built, valid);
}

}  // namespace gbm::kernels::omp
