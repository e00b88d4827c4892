#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "qafuse/curve.hpp"
#include "qafuse/error.hpp"
#include "qafuse/reference.hpp"
#include "support.hpp"

using namespace qafuse;
using qafuse::test::Gen;

namespace {

using Vec = std::vector<double>;

ReferenceCodebook make_codebook(std::vector<Vec> curves) {
  ReferenceCodebook cb;
  cb.feature_id = "f";
  cb.curve_len = curves.front().size();
  cb.curves = std::move(curves);
  return cb;
}

ReferenceCodebook random_codebook(Gen& gen, std::size_t q, std::size_t len) {
  std::vector<Vec> curves;
  for (std::size_t h = 0; h < q; ++h) curves.push_back(sort_descending(gen.reals(len)).values);
  return make_codebook(std::move(curves));
}

// Squared distance on the 1-based inclusive segment [u..v].
double seg_dist2(const Vec& a, const Vec& b, std::size_t u, std::size_t v) {
  double d = 0;
  for (std::size_t j = u - 1; j < v; ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
  return d;
}

}  // namespace

TEST(MatchReference, SingleCurveCodebook) {
  const auto cb = make_codebook({{0.9, 0.4, 0.1}});
  MatchConfig cfg{1, 3, 5, MatchMethod::knn_average};
  EXPECT_EQ(match_reference(Vec{1, 1, 1}, cb, cfg), cb.curves[0]);
  cfg = {1, 2, 1, MatchMethod::nearest};
  EXPECT_EQ(match_reference(Vec{0, 0, 0}, cb, cfg), cb.curves[0]);
}

TEST(MatchReference, ExactSegmentMatchWins) {
  const auto cb = make_codebook({{1, 0.5, 0.2, 0.1}, {0.9, 0.8, 0.3, 0.0}, {0.5, 0.4, 0.3, 0.2}});
  // Agrees with curve 1 on ranks 2..3 only; the whole curve comes back.
  const Vec query{0.1, 0.8, 0.3, 0.9};
  MatchConfig cfg{2, 3, 1, MatchMethod::nearest};
  EXPECT_EQ(match_reference(query, cb, cfg), cb.curves[1]);
}

TEST(MatchReference, KnnAverageExample) {
  const auto cb = make_codebook({{1, 0.5, 0}, {1, 0.3, 0}, {0.2, 0.1, 0}});
  MatchConfig cfg{1, 3, 2, MatchMethod::knn_average};
  const auto r = match_reference(Vec{1, 0.4, 0}, cb, cfg);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  EXPECT_DOUBLE_EQ(r[1], 0.4);
  EXPECT_DOUBLE_EQ(r[2], 0.0);
}

TEST(MatchReference, TiesGoToLowestIndex) {
  // 0.5 is exactly 0.25 from both first entries.
  MatchConfig cfg{1, 2, 1, MatchMethod::nearest};
  const auto ab = make_codebook({{0.75, 0.25}, {0.25, 0.25}});
  EXPECT_EQ(match_reference(Vec{0.5, 0.25}, ab, cfg), ab.curves[0]);
  const auto ba = make_codebook({{0.25, 0.25}, {0.75, 0.25}});
  EXPECT_EQ(match_reference(Vec{0.5, 0.25}, ba, cfg), ba.curves[0]);
}

TEST(MatchReference, NearestIsNoFartherThanAnyOtherEntry) {
  Gen gen(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 10 + gen.index(60);
    const auto cb = random_codebook(gen, 1 + gen.index(40), len);
    const auto query = sort_descending(gen.reals(len)).values;
    const std::size_t u = 1 + gen.index(len - 1);
    const std::size_t v = u + 1 + gen.index(len - u);
    MatchConfig cfg{u, v, 1, MatchMethod::nearest};
    const auto r = match_reference(query, cb, cfg);
    const double best = seg_dist2(query, r, u, v);
    for (const auto& c : cb.curves) EXPECT_LE(best, seg_dist2(query, c, u, v));
  }
}

TEST(MatchReference, KnnMatchesBruteForceOracle) {
  Gen gen(32);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 5 + gen.index(30);
    const std::size_t q = 1 + gen.index(30);
    const auto cb = random_codebook(gen, q, len);
    const auto query = sort_descending(gen.reals(len)).values;
    const std::size_t k = 1 + gen.index(8);
    MatchConfig cfg{1, len, k, MatchMethod::knn_average};

    std::vector<std::size_t> idx(q);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return seg_dist2(query, cb.curves[a], 1, len) < seg_dist2(query, cb.curves[b], 1, len);
    });
    const std::size_t kk = std::min(k, q);
    Vec expect(len, 0.0);
    for (std::size_t i = 0; i < kk; ++i) {
      for (std::size_t j = 0; j < len; ++j) expect[j] += cb.curves[idx[i]][j];
    }
    for (auto& x : expect) x /= static_cast<double>(kk);

    const auto r = match_reference(query, cb, cfg);
    for (std::size_t j = 0; j < len; ++j) EXPECT_NEAR(r[j], expect[j], 1e-12);
  }
}

TEST(MatchReference, SegmentEndIsClampedToCurveLength) {
  const auto cb = make_codebook({{0.9, 0.1}, {0.5, 0.4}});
  MatchConfig cfg{1, 400, 1, MatchMethod::nearest};
  EXPECT_EQ(match_reference(Vec{0.5, 0.35}, cb, cfg), cb.curves[1]);
}

TEST(MatchReference, Errors) {
  const auto cb = make_codebook({{0.9, 0.1, 0.0}});
  MatchConfig cfg{1, 3, 1, MatchMethod::nearest};
  EXPECT_THROW(match_reference(Vec{1, 0}, cb, cfg), DataError);
  ReferenceCodebook empty;
  empty.curve_len = 3;
  EXPECT_THROW(match_reference(Vec{1, 0, 0}, empty, cfg), DataError);
  EXPECT_THROW((MatchConfig{3, 3, 1, MatchMethod::nearest}.validate()), ConfigError);
  EXPECT_THROW((MatchConfig{0, 3, 1, MatchMethod::nearest}.validate()), ConfigError);
  EXPECT_THROW((MatchConfig{1, 3, 2, MatchMethod::nearest}.validate()), ConfigError);
  EXPECT_THROW((MatchConfig{1, 3, 0, MatchMethod::knn_average}.validate()), ConfigError);
}

TEST(SubtractAndNormalize, Examples) {
  const auto n = subtract_and_normalize(Vec{1.0, 0.3, 0.1}, Vec{0.2, 0.2, 0.1});
  ASSERT_EQ(n.values.size(), 3u);
  EXPECT_DOUBLE_EQ(n.values[0], 1.0);
  EXPECT_NEAR(n.values[1], 0.125, 1e-15);
  EXPECT_EQ(n.values[2], 0.0);
  EXPECT_FALSE(n.degenerate);

  const auto same = subtract_and_normalize(Vec{0.4, 0.3}, Vec{0.4, 0.3});
  EXPECT_TRUE(same.degenerate);
  EXPECT_EQ(same.values, (Vec{0, 0}));

  EXPECT_THROW(subtract_and_normalize(Vec{1, 0}, Vec{1}), DataError);
}

TEST(SubtractAndNormalize, FlatTailShrinksLShapedArea) {
  // An L-shaped curve over a raised tail: removing the tail leaves less area.
  Gen gen(33);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 200;
    Vec tail = sort_descending(gen.reals(len, 0.2, 0.4)).values;
    Vec curve = tail;
    for (auto& x : curve) x += gen.real(-0.01, 0.01);
    curve[0] = 0.95;
    curve[1] = 0.9;
    curve = sort_descending(curve).values;
    const double with_ref = area_under(subtract_and_normalize(curve, tail).values);
    const double without = area_under(min_max_normalize(curve).values);
    EXPECT_LT(with_ref, without);
  }
}

TEST(BuildCodebook, ForcedSelectionKeepsEveryRow) {
  Gen gen(34);
  const auto t = qafuse::test::random_table(gen, "f", 6, 20);
  const auto cb = build_codebook(t, 6, 20, 1, "corpus");
  ASSERT_EQ(cb.size(), 6u);
  for (std::size_t q = 0; q < 6; ++q) {
    EXPECT_EQ(cb.curves[q], sort_descending(t.row(q)).values);
  }
  EXPECT_EQ(cb.provenance, "corpus");
  EXPECT_EQ(cb.feature_id, "f");
}

TEST(BuildCodebook, SamplesDistinctRowsDeterministically) {
  Gen gen(35);
  const auto t = qafuse::test::random_table(gen, "f", 1500, 50);
  const auto cb = build_codebook(t, 1000, 20, 7);
  const auto again = build_codebook(t, 1000, 20, 7);
  EXPECT_EQ(cb.curves, again.curves);
  EXPECT_NE(cb.curves, build_codebook(t, 1000, 20, 8).curves);

  // Each curve must be the down-sampled sort of one distinct table row.
  std::map<Vec, std::size_t> rows;
  for (std::size_t q = 0; q < t.num_queries(); ++q) {
    rows.emplace(downsample(sort_descending(t.row(q)).values, 20), q);
  }
  std::set<std::size_t> used;
  for (const auto& c : cb.curves) {
    ASSERT_EQ(c.size(), 20u);
    EXPECT_TRUE(std::is_sorted(c.rbegin(), c.rend()));
    auto it = rows.find(c);
    ASSERT_NE(it, rows.end());
    used.insert(it->second);
  }
  EXPECT_EQ(used.size(), 1000u);
}

TEST(BuildCodebook, Errors) {
  Gen gen(36);
  const auto t = qafuse::test::random_table(gen, "f", 5, 10);
  EXPECT_THROW(build_codebook(t, 6, 10, 0), DataError);
  EXPECT_THROW(build_codebook(t, 5, 11, 0), DataError);
}

TEST(CodebookIo, RoundTripIsLossless) {
  Gen gen(37);
  const auto t = qafuse::test::random_table(gen, "feat", 30, 40);
  const auto cb = build_codebook(t, 10, 25, 3, "note");
  std::stringstream ss;
  write_codebook(ss, cb);
  const auto text = ss.str();
  const auto back = read_codebook(ss);
  EXPECT_EQ(back.feature_id, cb.feature_id);
  EXPECT_EQ(back.curve_len, cb.curve_len);
  EXPECT_EQ(back.seed, cb.seed);
  EXPECT_EQ(back.provenance, cb.provenance);
  EXPECT_EQ(back.curves, cb.curves);  // exact double equality
  std::stringstream again;
  write_codebook(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(CodebookIo, RejectsMalformedFiles) {
  std::istringstream wrong_tag(R"({"format":"other","feature_id":"f"})");
  EXPECT_THROW(read_codebook(wrong_tag), DataError);
  std::istringstream bad_count(
      R"({"format":"qafuse-codebook-1","feature_id":"f","q":2,"curve_len":2,"seed":0,"provenance":"","curves":[[1,0]]})");
  EXPECT_THROW(read_codebook(bad_count), DataError);
  std::istringstream rising(
      R"({"format":"qafuse-codebook-1","feature_id":"f","q":1,"curve_len":2,"seed":0,"provenance":"","curves":[[0,1]]})");
  EXPECT_THROW(read_codebook(rising), DataError);
}
