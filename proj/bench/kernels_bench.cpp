// Serial reference versus OpenMP kernels on representative sizes.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "gbm/kernels.hpp"

using namespace gbm::kernels;

namespace {

std::vector<std::uint8_t> random_mask(int n, double p, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n) * n);
  for (auto& v : m) v = (eng() >> 11) * 0x1.0p-53 < p ? 1 : 0;
  return m;
}

std::vector<float> random_plane(int w, int h, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::vector<float> v(static_cast<std::size_t>(w) * h);
  for (auto& x : v) x = static_cast<float>(eng() % 1000);
  return v;
}

template <auto Fn>
void bm_edt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto mask = random_mask(n, 0.05, 1);
  std::vector<double> out(mask.size());
  for (auto _ : state) {
    Fn(mask, n, n, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mask.size()));
}

template <auto Fn>
void bm_sobel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto values = random_plane(n, n, 2);
  const std::vector<std::uint8_t> valid(values.size(), 1);
  const PlaneView in{values, valid, n, n};
  std::vector<float> out(values.size());
  std::vector<std::uint8_t> out_valid(values.size());
  for (auto _ : state) {
    Fn(in, out, out_valid);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(values.size()));
}

template <auto Fn>
void bm_ncc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int window = 8;
  const auto a = random_plane(n, n, 3);
  const auto b = random_plane(n, n, 4);
  const std::vector<std::uint8_t> valid(a.size(), 1);
  const PlaneView pa{a, valid, n, n}, pb{b, valid, n, n};
  std::vector<double> out((2 * window + 1) * (2 * window + 1));
  for (auto _ : state) {
    Fn(pa, pb, window, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void bm_vote(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<std::vector<std::uint8_t>> masks;
  for (int k = 0; k < 4; ++k) masks.push_back(random_mask(n, 0.3, 10 + k));
  std::vector<std::span<const std::uint8_t>> views(masks.begin(), masks.end());
  std::vector<std::uint8_t> out(masks[0].size());
  for (auto _ : state) {
    Fn(views, 2, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

template <auto Fn>
void bm_blocks(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int block = 83;
  const auto mask = random_mask(n, 0.2, 5);
  const int bn = (n + block - 1) / block;
  std::vector<std::int64_t> built(static_cast<std::size_t>(bn) * bn), valid(built.size());
  for (auto _ : state) {
    Fn(mask, n, n, block, built, valid);
    benchmark::DoNotOptimize(built.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(mask.size()));
}

}  // namespace

BENCHMARK(bm_edt<serial::squared_edt>)->Name("edt/serial")->Arg(256)->Arg(1024);
BENCHMARK(bm_edt<omp::squared_edt>)->Name("edt/omp")->Arg(256)->Arg(1024);
BENCHMARK(bm_sobel<serial::sobel>)->Name("sobel/serial")->Arg(256)->Arg(1024);
BENCHMARK(bm_sobel<omp::sobel>)->Name("sobel/omp")->Arg(256)->Arg(1024);
BENCHMARK(bm_ncc<serial::ncc_scores>)->Name("ncc/serial")->Arg(128)->Arg(256);
BENCHMARK(bm_ncc<omp::ncc_scores>)->Name("ncc/omp")->Arg(128)->Arg(256);
BENCHMARK(bm_vote<serial::vote>)->Name("vote/serial")->Arg(1024);
BENCHMARK(bm_vote<omp::vote>)->Name("vote/omp")->Arg(1024);
BENCHMARK(bm_blocks<serial::block_counts>)->Name("blocks/serial")->Arg(1024);
BENCHMARK(bm_blocks<omp::block_counts>)->Name("blocks/omp")->Arg(1024);

BENCHMARK_MAIN();
