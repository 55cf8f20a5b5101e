#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "gbm/ensemble.hpp"
#include "gbm/raster_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbm;
using testutil::errc_of;

namespace {

RasterGrid labels_of(std::vector<float> v, int w, std::optional<float> nodata = std::nullopt) {
  const int h = static_cast<int>(v.size()) / w;
  return RasterGrid(oracle::unit_frame(w, h), 1, DataType::u8, std::move(v), nodata);
}

RasterGrid mask_of(const std::vector<std::uint8_t>& m, int w, int h) {
  std::vector<float> v(m.begin(), m.end());
  for (auto& x : v) {
    if (x == 2.0F) x = kMaskNodata;
  }
  return RasterGrid(oracle::unit_frame(w, h), 1, DataType::u8, std::move(v), kMaskNodata);
}

RasterGrid pixel4(float r, float g, float b, float nir) {
  return RasterGrid(oracle::unit_frame(1, 1), 4, DataType::f32, {r, g, b, nir}, -9999.0F);
}

}  // namespace

TEST_CASE("binarize is strict at 5") {
  const RasterGrid m = binarize(labels_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255}, 12, 255.0F));
  const std::vector<float> expect{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, kMaskNodata};
  CHECK(std::equal(expect.begin(), expect.end(), m.band(0).begin()));
  CHECK(m.is_nodata(m.band(0)[11]));
  const RasterGrid zeros = binarize(labels_of(std::vector<float>(9, 0.0F), 3));
  for (float v : zeros.band(0)) CHECK(v == 0.0F);
  CHECK(errc_of([] { (void)binarize(labels_of({11}, 1)); }) == Errc::class_out_of_range);
  CHECK(errc_of([] { (void)binarize(labels_of({2.5F}, 1)); }) == Errc::class_out_of_range);
}

TEST_CASE("baseline segmenter examples") {
  CHECK(baseline_segment(pixel4(0.1F, 0.1F, 0.1F, 0.6F)).at(0, 0, 0) == 2.0F);
  CHECK(baseline_segment(pixel4(0.4F, 0.4F, 0.4F, 0.42F)).at(0, 0, 0) == 8.0F);
  // Dark low-NDVI pixels are not buildings either.
  CHECK(baseline_segment(pixel4(0.05F, 0.05F, 0.05F, 0.05F)).at(0, 0, 0) == 2.0F);
  const RasterGrid nd = baseline_segment(pixel4(-9999.0F, -9999.0F, -9999.0F, -9999.0F));
  CHECK(nd.is_nodata(nd.at(0, 0, 0)));
  const RasterGrid three(oracle::unit_frame(1, 1), 3, DataType::f32, {0, 0, 0});
  CHECK(errc_of([&] { (void)baseline_segment(three); }) == Errc::band_mismatch);
}

TEST_CASE("run_segmenters keeps order and is deterministic") {
  oracle::Rng rng(51);
  std::vector<float> v(4 * 100);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  const RasterGrid img(oracle::unit_frame(10, 10), 4, DataType::f32, v);
  const std::vector<std::shared_ptr<const Segmenter>> one{std::make_shared<BaselineSegmenter>()};
  CHECK(run_segmenters(img, one).size() == 1);
  const std::vector<std::shared_ptr<const Segmenter>> two{one[0], one[0]};
  const auto out = run_segmenters(img, two);
  REQUIRE(out.size() == 2);
  CHECK(out[0].identical(out[1]));
  CHECK(errc_of([&] { (void)run_segmenters(img, {}); }) == Errc::empty_input);
}

TEST_CASE("external segmenter file contract") {
  testutil::TempDir dir;
  const RasterGrid labels = labels_of({0, 3, 5, 6, 10, 8}, 3);
  // An identity process: the output file is the input file.
  testutil::spit(dir / "echo.sh", "#!/bin/sh\ncp \"$1\" \"$2\"\n");
  testutil::spit(dir / "fail.sh", "#!/bin/sh\nexit 3\n");
  testutil::spit(dir / "silent.sh", "#!/bin/sh\nexit 0\n");
  write_raster(labels_of({0, 3, 5, 6, 10, 8, 1, 1}, 4), dir / "wrong.tif");
  testutil::spit(dir / "wrong.sh", "#!/bin/sh\ncp '" + (dir / "wrong.tif").string() + "' \"$2\"\n");
  for (const char* s : {"echo.sh", "fail.sh", "silent.sh", "wrong.sh"}) {
    std::filesystem::permissions(dir / s, std::filesystem::perms::owner_all);
  }

  const auto echo = make_segmenter("exec:" + (dir / "echo.sh").string(), dir / "work");
  CHECK(echo->segment(labels).identical(labels));

  const std::shared_ptr<const Segmenter> fail = make_segmenter("exec:" + (dir / "fail.sh").string(), dir / "work");
  const std::shared_ptr<const Segmenter> silent = make_segmenter("exec:" + (dir / "silent.sh").string(), dir / "work");
  const std::shared_ptr<const Segmenter> wrong = make_segmenter("exec:" + (dir / "wrong.sh").string(), dir / "work");
  CHECK(errc_of([&] { (void)fail->segment(labels); }) == Errc::external_process);
  CHECK(errc_of([&] { (void)silent->segment(labels); }) == Errc::external_process);
  const std::vector<std::shared_ptr<const Segmenter>> mixed{std::make_shared<BaselineSegmenter>(), wrong};
  const RasterGrid img(oracle::unit_frame(3, 2), 4, DataType::f32, std::vector<float>(24, 0.3F));
  CHECK(errc_of([&] { (void)run_segmenters(img, mixed); }) == Errc::external_process);
  CHECK(errc_of([&] { (void)make_segmenter("unet", dir.path()); }) == Errc::invalid_argument);
  CHECK(errc_of([&] { (void)make_segmenter("exec:", dir.path()); }) == Errc::invalid_argument);
  // Temporary files are cleaned up.
  CHECK(std::filesystem::is_empty(dir / "work"));
}

TEST_CASE("four-vote truth table") {
  int positives = 0;
  for (int bits = 0; bits < 16; ++bits) {
    std::vector<RasterGrid> masks;
    int ones = 0;
    for (int k = 0; k < 4; ++k) {
      const std::uint8_t b = (bits >> k) & 1;
      ones += b;
      masks.push_back(mask_of({b}, 1, 1));
    }
    const float out = majority_vote(masks, 2).at(0, 0, 0);
    CHECK(out == (ones >= 2 ? 1.0F : 0.0F));
    positives += out == 1.0F ? 1 : 0;
  }
  CHECK(positives == 11);
}

TEST_CASE("vote properties on random stacks") {
  oracle::Rng rng(52);
  for (int trial = 0; trial < 150; ++trial) {
    const int w = rng.range(1, 12), h = rng.range(1, 12), n = rng.range(1, 6);
    std::vector<std::vector<std::uint8_t>> raw(static_cast<std::size_t>(n));
    for (auto& m : raw) {
      m.resize(static_cast<std::size_t>(w) * h);
      for (auto& v : m) v = static_cast<std::uint8_t>(rng.coin(0.1) ? 2 : rng.range(0, 1));
    }
    auto build = [&](const std::vector<std::vector<std::uint8_t>>& r) {
      std::vector<RasterGrid> out;
      for (const auto& m : r) out.push_back(mask_of(m, w, h));
      return out;
    };
    const auto masks = build(raw);
    const int t = rng.range(1, n);
    const RasterGrid v = majority_vote(masks, t);
    for (std::size_t k = 0; k < raw[0].size(); ++k) {
      int yes = 0, cast = 0;
      bool any = false, all = true;
      for (const auto& m : raw) {
        if (m[k] == 2) continue;
        ++cast;
        yes += m[k];
        any = any || m[k] == 1;
        all = all && m[k] == 1;
      }
      const float got = v.band(0)[k];
      if (cast == 0) {
        CHECK(v.is_nodata(got));
        continue;
      }
      CHECK(got == (yes >= t ? 1.0F : 0.0F));
      if (t == 1) CHECK((got == 1.0F) == any);
      if (t == n && cast == n) CHECK((got == 1.0F) == all);
    }
    // Permutation invariance.
    auto perm = raw;
    std::reverse(perm.begin(), perm.end());
    if (n > 2) std::swap(perm[0], perm[1]);
    CHECK(majority_vote(build(perm), t).identical(v));
    // Monotone: turning one vote on never turns an output off.
    auto more = raw;
    const auto who = static_cast<std::size_t>(rng.range(0, n - 1));
    const auto where = static_cast<std::size_t>(rng.range(0, w * h - 1));
    if (more[who][where] == 0) more[who][where] = 1;
    const RasterGrid v2 = majority_vote(build(more), t);
    for (std::size_t k = 0; k < raw[0].size(); ++k) {
      if (v.band(0)[k] == 1.0F) CHECK(v2.band(0)[k] == 1.0F);
    }
    // Four copies of one mask give the mask back.
    std::vector<std::vector<std::uint8_t>> same(4, raw[0]);
    const RasterGrid s = majority_vote(build(same), rng.range(1, 4));
    CHECK(std::equal(s.band(0).begin(), s.band(0).end(), masks[0].band(0).begin()));
  }
}

TEST_CASE("vote errors") {
  const RasterGrid a = mask_of({1, 0}, 2, 1), b = mask_of({1, 0, 1}, 3, 1);
  const std::vector<RasterGrid> ab{a, b}, aa{a, a};
  CHECK(errc_of([&] { (void)majority_vote(ab, 1); }) == Errc::dims_mismatch);
  CHECK(errc_of([&] { (void)majority_vote(aa, 3); }) == Errc::invalid_argument);
  CHECK(errc_of([&] { (void)majority_vote(aa, 0); }) == Errc::invalid_argument);
  CHECK(errc_of([&] { (void)majority_vote(std::vector<RasterGrid>{}, 1); }) == Errc::empty_input);
}
