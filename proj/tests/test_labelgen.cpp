#include <doctest.h>

#include <cmath>

#include "gbm/ensemble.hpp"
#include "gbm/labelgen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbm;
using testutil::errc_of;

namespace {

// Axis-aligned box in the pixel space of unit_frame: columns [c0, c1) and
// rows [r0, r1) map to lon [c0, c1] and lat [-r1, -r0].
Ring box_ring(double c0, double r0, double c1, double r1) {
  return {{c0, -r0}, {c1, -r0}, {c1, -r1}, {c0, -r1}, {c0, -r0}};
}

Polygon box(double c0, double r0, double c1, double r1, std::string id = "b") {
  return Polygon{{box_ring(c0, r0, c1, r1)}, std::move(id)};
}

int ones(const RasterGrid& r) {
  int n = 0;
  for (float v : r.band(0)) n += v == 1.0F ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("rasterize a square and a square with a hole") {
  const RasterFrame f = oracle::unit_frame(8, 8);
  const RasterGrid sq = rasterize(PolygonSet{{box(2, 2, 5, 5)}}, f);
  CHECK(sq.dtype() == DataType::u8);
  CHECK(ones(sq) == 9);
  for (int r = 2; r <= 4; ++r) {
    for (int c = 2; c <= 4; ++c) CHECK(sq.at(0, r, c) == 1.0F);
  }
  Polygon holed = box(2, 2, 5, 5);
  holed.rings.push_back(box_ring(3.25, 3.25, 3.75, 3.75));
  const RasterGrid h = rasterize(PolygonSet{{holed}}, f);
  CHECK(ones(h) == 8);
  CHECK(h.at(0, 3, 3) == 0.0F);
}

TEST_CASE("rasterizing a union is the OR of the parts") {
  oracle::Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = rng.range(4, 30), h = rng.range(4, 30);
    const RasterFrame f = oracle::unit_frame(w, h);
    PolygonSet all;
    std::vector<float> expect(static_cast<std::size_t>(w) * h, 0.0F);
    for (int k = 0; k < rng.range(1, 5); ++k) {
      const double c0 = rng.uniform(-2, w), r0 = rng.uniform(-2, h);
      const Polygon p = box(c0, r0, c0 + rng.uniform(0.3, 8), r0 + rng.uniform(0.3, 8));
      const RasterGrid part = rasterize(PolygonSet{{p}}, f);
      for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = std::max(expect[i], part.band(0)[i]);
      all.polygons.push_back(p);
    }
    const RasterGrid joint = rasterize(all, f);
    CHECK(std::equal(expect.begin(), expect.end(), joint.band(0).begin()));
  }
}

TEST_CASE("rasterize rejects open rings") {
  Polygon p = box(0, 0, 2, 2);
  p.rings[0].pop_back();
  CHECK(errc_of([&] { (void)rasterize(PolygonSet{{p}}, oracle::unit_frame(4, 4)); }) == Errc::unclosed_ring);
}

TEST_CASE("signed distance on the 8x8 example") {
  std::vector<std::uint8_t> m(64, 0);
  for (int r = 3; r <= 5; ++r) {
    for (int c = 3; c <= 5; ++c) m[static_cast<std::size_t>(r) * 8 + c] = 1;
  }
  const RasterGrid d = signed_distance(oracle::mask_raster(m, 8, 8));
  CHECK(d.at(0, 4, 4) == 2.0F);
  CHECK(d.at(0, 3, 3) == 1.0F);
  CHECK(d.at(0, 0, 0) == static_cast<float>(-std::sqrt(18.0)));
  CHECK(distance_label(d.at(0, 4, 4)) == 6);
  CHECK(distance_label(d.at(0, 3, 3)) == 6);
  CHECK(distance_label(d.at(0, 0, 0)) == 2);
}

TEST_CASE("signed distance matches the all-pairs oracle") {
  oracle::Rng rng(32);
  for (int trial = 0; trial < 220; ++trial) {
    const bool big = trial % 40 == 0;
    const int w = big ? 64 : rng.range(1, 32), h = big ? 64 : rng.range(1, 32);
    const auto m = oracle::random_mask(rng, w, h, rng.uniform(0.0, 1.0));
    const RasterGrid d = signed_distance(oracle::mask_raster(m, w, h));
    const auto ref = oracle::signed_distance(m, w, h);
    bool same = true;
    for (std::size_t k = 0; k < m.size(); ++k) same = same && d.band(0)[k] == static_cast<float>(ref[k]);
    CHECK(same);
    // Binarizing the labels gives back the mask.
    const RasterGrid lab = truncate_and_bin(d);
    const RasterGrid back = binarize(lab);
    bool round = true;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const int l = static_cast<int>(lab.band(0)[k]);
      round = round && back.band(0)[k] == static_cast<float>(m[k]) && std::abs(l - 5) <= 5 &&
              l == oracle::label_of(ref[k]);
    }
    CHECK(round);
  }
}

TEST_CASE("complementing the mask negates the distance") {
  oracle::Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = rng.range(1, 20), h = rng.range(1, 20);
    auto m = oracle::random_mask(rng, w, h, 0.4);
    const RasterGrid d = signed_distance(oracle::mask_raster(m, w, h));
    for (auto& v : m) v = v ? 0 : 1;
    const RasterGrid n = signed_distance(oracle::mask_raster(m, w, h));
    for (std::size_t k = 0; k < m.size(); ++k) CHECK(n.band(0)[k] == -d.band(0)[k]);
  }
}

TEST_CASE("uniform masks saturate") {
  const RasterGrid full = signed_distance(oracle::mask_raster(std::vector<std::uint8_t>(12, 1), 4, 3));
  const RasterGrid empty = signed_distance(oracle::mask_raster(std::vector<std::uint8_t>(12, 0), 4, 3));
  for (float v : full.band(0)) CHECK(v == 7.0F);
  for (float v : empty.band(0)) CHECK(v == -7.0F);
}

TEST_CASE("distance binning") {
  CHECK(distance_label(2.0) == 6);
  CHECK(distance_label(1.0) == 6);
  CHECK(distance_label(-4.243) == 2);
  CHECK(distance_label(0.0) == 5);
  CHECK(distance_label(10.0) == 10);
  CHECK(distance_label(250.0) == 10);
  CHECK(distance_label(-10.0) == 0);
  CHECK(distance_label(-1e9) == 0);
  CHECK(distance_label(2.0001) == 7);
  CHECK(distance_label(-2.0) == 4);
  oracle::Rng rng(34);
  for (int k = 0; k < 20000; ++k) {
    const double beta = rng.uniform(0.5, 30);
    const double d = rng.uniform(-2 * beta, 2 * beta);
    const int l = distance_label(d, beta);
    CHECK(l == oracle::label_of(d, beta));
    CHECK((l > 5) == (d > 0));
  }
  CHECK(errc_of([] { (void)distance_label(1.0, 0.0); }) == Errc::invalid_argument);
}

TEST_CASE("patch lattice counts") {
  auto raster = [](int n) {
    return RasterGrid::filled(oracle::unit_frame(n, n), 1, DataType::u8, 1.0F);
  };
  const RasterGrid a = raster(512);
  const auto p = cut_patches(a, a, 7);
  CHECK(p.size() == 4);
  CHECK(p[3].row == 256);
  CHECK(p[3].col == 256);
  CHECK(p[1].image.transform().origin_lon == 256.0);
  CHECK(p[1].image.width() == 256);
  const RasterGrid b = raster(600);
  CHECK(cut_patches(b, b, 7).size() == 4);
  const RasterGrid c = raster(200);
  CHECK(errc_of([&] { (void)cut_patches(c, c, 7); }) == Errc::too_small);
  CHECK(errc_of([&] { (void)cut_patches(a, b, 7); }) == Errc::dims_mismatch);
}

TEST_CASE("split is deterministic and close to 80/20 for every prefix") {
  oracle::Rng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t seed = rng.next();
    int val = 0;
    for (std::size_t n = 1; n <= 300; ++n) {
      val += split_for(seed, n - 1) == Split::validation ? 1 : 0;
      CHECK(split_for(seed, n - 1) == split_for(seed, n - 1));
      if (n >= 5) {
        CHECK(std::abs(val - static_cast<double>(n) * 0.2) <= 1.0);
        CHECK(std::abs(static_cast<double>(n - val) - static_cast<double>(n) * 0.8) <= 1.0);
      }
    }
  }
  // Different seeds place the validation patches differently.
  int differ = 0;
  for (std::size_t i = 0; i < 100; ++i) differ += split_for(1, i) != split_for(2, i) ? 1 : 0;
  CHECK(differ > 0);
}
