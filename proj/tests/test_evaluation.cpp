#include <doctest.h>

#include <algorithm>

#include "gbm/evaluation.hpp"
#include "gbm/raster_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gbm;
using testutil::errc_of;

namespace {

RasterGrid m(std::vector<float> v, int w, std::optional<float> nodata = 255.0F) {
  const int h = static_cast<int>(v.size()) / w;
  return RasterGrid(oracle::unit_frame(w, h), 1, DataType::u8, std::move(v), nodata);
}

Confusion random_confusion(oracle::Rng& rng) {
  return Confusion{rng.range(0, 50), rng.range(0, 50), rng.range(0, 50), rng.range(0, 50)};
}

}  // namespace

TEST_CASE("confusion counts") {
  const Confusion c = confusion(m({1, 1, 1, 0}, 2), m({1, 1, 0, 1}, 2));
  CHECK(c == Confusion{2, 1, 1, 0});
  const RasterGrid a = m({1, 0, 0, 1, 1, 0}, 3);
  const Confusion same = confusion(a, a);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  const Confusion inv = confusion(a, m({0, 1, 1, 0, 0, 1}, 3));
  CHECK(inv.tp == 0);
  CHECK(inv.tn == 0);
  // Pixels invalid on either side are skipped.
  CHECK(confusion(m({1, 255, 1}, 3), m({1, 1, 255}, 3)) == Confusion{1, 0, 0, 0});
  CHECK(errc_of([&] { (void)confusion(a, m({1}, 1)); }) == Errc::dims_mismatch);
}

TEST_CASE("scores from the formula") {
  const auto s = f1_iou(Confusion{2, 1, 1, 0});
  REQUIRE(s);
  CHECK(s->f1 == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(s->iou == 0.5);
  const auto p = f1_iou(Confusion{5, 0, 0, 9});
  CHECK(p->f1 == 1.0);
  CHECK(p->iou == 1.0);
  CHECK_FALSE(f1_iou(Confusion{0, 0, 0, 9}));
  oracle::Rng rng(81);
  for (int k = 0; k < 5000; ++k) {
    const Confusion c = random_confusion(rng);
    const auto r = f1_iou(c);
    if (c.tp + c.fp + c.fn == 0) {
      CHECK_FALSE(r);
      continue;
    }
    CHECK(r->f1 == doctest::Approx(2 * r->iou / (1 + r->iou)).epsilon(1e-12));
    CHECK(r->f1 >= r->iou);
    if (r->f1 == r->iou) CHECK((r->iou == 0.0 || r->iou == 1.0));
  }
}

TEST_CASE("scores are invariant to joint permutations") {
  oracle::Rng rng(82);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = rng.range(1, 10), h = rng.range(1, 10);
    auto p = oracle::random_mask(rng, w, h, 0.4), r = oracle::random_mask(rng, w, h, 0.4);
    const Confusion c = confusion(oracle::mask_raster(p, w, h), oracle::mask_raster(r, w, h));
    std::vector<int> rows(static_cast<std::size_t>(h)), cols(static_cast<std::size_t>(w));
    for (int k = 0; k < h; ++k) rows[k] = k;
    for (int k = 0; k < w; ++k) cols[k] = k;
    std::shuffle(rows.begin(), rows.end(), std::mt19937(static_cast<unsigned>(trial)));
    std::shuffle(cols.begin(), cols.end(), std::mt19937(static_cast<unsigned>(trial + 100)));
    std::vector<std::uint8_t> pp(p.size()), rr(r.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        pp[static_cast<std::size_t>(y) * w + x] = p[static_cast<std::size_t>(rows[y]) * w + cols[x]];
        rr[static_cast<std::size_t>(y) * w + x] = r[static_cast<std::size_t>(rows[y]) * w + cols[x]];
      }
    }
    CHECK(confusion(oracle::mask_raster(pp, w, h), oracle::mask_raster(rr, w, h)) == c);
  }
}

TEST_CASE("group aggregation") {
  const Confusion a{2, 1, 1, 0}, neg{0, 0, 0, 4};
  const std::vector<Confusion> one{a}, two{a, a}, with_neg{a, neg};
  const ScoreRow r1 = aggregate_group("city", "x", one);
  CHECK(*r1.f1 == f1_iou(a)->f1);
  CHECK(*r1.f1 == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(*aggregate_group("city", "x", two).f1 == *r1.f1);
  CHECK(*aggregate_group("city", "x", two).iou == *r1.iou);
  const ScoreRow rn = aggregate_group("city", "x", with_neg);
  CHECK(*rn.f1 == *r1.f1);
  CHECK(rn.n_patches == 1);
  const std::vector<Confusion> only_neg{neg};
  const ScoreRow undefined = aggregate_group("city", "x", only_neg);
  CHECK_FALSE(undefined.f1);
  CHECK(undefined.n_patches == 0);
  CHECK(errc_of([] { (void)aggregate_group("city", "x", {}); }) == Errc::empty_group);

  oracle::Rng rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const Confusion c = random_confusion(rng);
    if (!f1_iou(c)) continue;
    const std::vector<Confusion> copies(static_cast<std::size_t>(rng.range(1, 9)), c);
    for (Aggregation mode : {Aggregation::micro, Aggregation::macro}) {
      const ScoreRow row = aggregate_group("world", "world", copies, mode);
      CHECK(*row.f1 == doctest::Approx(f1_iou(c)->f1).epsilon(1e-12));
      CHECK(*row.iou == doctest::Approx(f1_iou(c)->iou).epsilon(1e-12));
    }
  }
  // Macro averages the patch scores.
  const std::vector<Confusion> mixed{Confusion{1, 0, 0, 0}, Confusion{0, 1, 0, 0}};
  CHECK(*aggregate_group("world", "world", mixed, Aggregation::macro).f1 == 0.5);
  CHECK(*aggregate_group("world", "world", mixed, Aggregation::micro).f1 == doctest::Approx(2.0 / 3.0));
  CHECK(parse_aggregation("macro") == Aggregation::macro);
  CHECK(errc_of([] { (void)parse_aggregation("median"); }) == Errc::invalid_argument);
}

TEST_CASE("evaluating directories with groups") {
  testutil::TempDir dir;
  write_raster(m({1, 1, 1, 0}, 2), dir / "pred" / "p1.tif");
  write_raster(m({1, 1, 0, 1}, 2), dir / "ref" / "p1.tif");
  write_raster(m({0, 0, 0, 0}, 2), dir / "pred" / "p2.tif");
  write_raster(m({0, 0, 0, 0}, 2), dir / "ref" / "p2.json");
  write_raster(m({1, 0, 0, 0}, 2), dir / "pred" / "p3.tif");
  write_raster(m({1, 0, 0, 0}, 2), dir / "ref" / "p3.tif");
  testutil::spit(dir / "groups.csv", "patch_id,city,continent\np1,berlin,europe\np2,berlin,europe\np3,lagos,africa\n");
  const auto rows = evaluate_dirs(dir / "pred", dir / "ref", dir / "groups.csv");
  std::vector<std::string> keys;
  for (const auto& r : rows) keys.push_back(r.scope + ":" + r.scope_id);
  const std::vector<std::string> expect{"patch:p1",        "patch:p2",         "patch:p3", "city:berlin",
                                        "city:lagos",       "continent:africa", "continent:europe",
                                        "world:world"};
  CHECK(keys == expect);
  CHECK(*rows[0].f1 == doctest::Approx(4.0 / 6.0));
  CHECK_FALSE(rows[1].f1);
  CHECK(*rows[3].f1 == doctest::Approx(4.0 / 6.0));
  CHECK(*rows[7].iou == doctest::Approx(3.0 / 5.0));
  write_scores_csv(rows, dir / "scores.csv");
  const std::string csv = testutil::slurp(dir / "scores.csv");
  CHECK(csv.rfind("scope,scope_id,n_patches,f1,iou\n", 0) == 0);
  CHECK(csv.find("patch,p2,0,,\n") != std::string::npos);

  // Without groups only patches and the world row.
  const auto flat = evaluate_dirs(dir / "pred", dir / "ref", std::nullopt);
  CHECK(flat.size() == 4);
  CHECK(flat.back().scope == "world");

  testutil::spit(dir / "dup.csv", "patch_id,city,continent\np1,a,b\np1,a,b\n");
  CHECK(errc_of([&] { (void)read_groups(dir / "dup.csv"); }));
}
