#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "tap/weak_labels.hpp"

using namespace tap;
using namespace tap::labels;

TEST(Subsample, Examples) {
  EXPECT_EQ(subsample_indices({10, 5}), (std::vector<std::int64_t>{0, 5}));
  EXPECT_TRUE(subsample_indices({4, 5}).empty());
  EXPECT_EQ(subsample_indices({5, 1}), (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
}

TEST(Subsample, DefaultInterval) { EXPECT_EQ(SubsampleSpec{}.interval, 5); }

TEST(Subsample, CountIsFloorOverGrid) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t T = std::int64_t(rng() % 1000001);
    const std::int64_t I = 1 + std::int64_t(rng() % 1000);
    const auto idx = subsample_indices({T, I});
    ASSERT_EQ(std::int64_t(idx.size()), T / I);
    if (!idx.empty()) {
      EXPECT_EQ(idx.front(), 0);
      EXPECT_LT(idx.back(), T);
    }
  }
}

TEST(Subsample, RejectsZeroInterval) { EXPECT_THROW(subsample_indices({10, 0}), Error); }

TEST(Sigmoid, Values) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(ConfidenceFilter, Examples) {
  const std::vector<LabelCandidate> c{{{0, 0, 1, 1}, 0.0, "a", 0},
                                      {{0, 0, 1, 1}, -10.0, "a", 0},
                                      {{0, 0, 1, 1}, 2.0, "a", 0}};
  const auto half = confidence_filter(c, LabelThreshold(0.5));
  ASSERT_EQ(half.size(), 2u);
  EXPECT_EQ(half[0].logit, 0.0);
  EXPECT_EQ(half[1].logit, 2.0);
  const auto high = confidence_filter(c, LabelThreshold(0.85));
  ASSERT_EQ(high.size(), 1u);
  EXPECT_EQ(high[0].logit, 2.0);
}

TEST(ConfidenceFilter, ThresholdRange) {
  EXPECT_THROW(LabelThreshold(0.0), Error);
  EXPECT_THROW(LabelThreshold(1.0), Error);
  EXPECT_EQ(LabelThreshold().tau, 0.35);
}

TEST(ConfidenceFilter, MonotoneAndLogitEquivalent) {
  std::mt19937 rng(5);
  std::normal_distribution<double> logit(0.0, 3.0);
  std::vector<LabelCandidate> c(200);
  for (auto& x : c) x.logit = logit(rng);
  std::size_t previous = c.size() + 1;
  for (double tau = 0.05; tau < 0.99; tau += 0.05) {
    const auto kept = confidence_filter(c, LabelThreshold(tau));
    EXPECT_LE(kept.size(), previous);
    previous = kept.size();
    const double cut = std::log(tau / (1.0 - tau));
    std::size_t by_logit = 0;
    for (const auto& x : c) by_logit += x.logit >= cut;
    EXPECT_EQ(kept.size(), by_logit);
  }
}

Detection box_det(BoundingBox b, int cls = 0) {
  Detection d;
  d.box = b;
  d.class_id = cls;
  return d;
}

TEST(ExportLabels, FullFrame) {
  const auto r = export_labels({box_det({0, 0, 64, 48}, 2)}, 64, 48);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (LabelRecord{2, 0.5, 0.5, 1.0, 1.0, {}}));
}

TEST(ExportLabels, Normalization) {
  const auto r = export_labels({box_det({10, 10, 30, 50})}, 100, 100);
  EXPECT_DOUBLE_EQ(r[0].cx, 0.2);
  EXPECT_DOUBLE_EQ(r[0].cy, 0.3);
  EXPECT_DOUBLE_EQ(r[0].w, 0.2);
  EXPECT_DOUBLE_EQ(r[0].h, 0.4);
}

TEST(ExportLabels, OutsideImageIsDegenerate) {
  try {
    export_labels({box_det({120, 120, 140, 150})}, 100, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBox);
  }
}

TEST(ExportLabels, ClampedValuesInUnitInterval) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-50, 150);
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    std::vector<LabelRecord> r;
    try {
      r = export_labels({box_det({a, c, b, d})}, 100, 80);
    } catch (const Error&) {
      continue;
    }
    for (double v : {r[0].cx, r[0].cy, r[0].w, r[0].h}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(MaskBoundary, Square) {
  BinaryGrid g(5, 5);
  for (int x = 1; x < 3; ++x)
    for (int y = 1; y < 3; ++y) g.set(x, y);
  const auto ring = mask_boundary(rle_encode(g));
  const std::set<std::pair<int, int>> corners(ring.begin(), ring.end());
  EXPECT_EQ(ring.size(), 4u);
  EXPECT_EQ(corners, (std::set<std::pair<int, int>>{{1, 1}, {3, 1}, {3, 3}, {1, 3}}));
}

TEST(MaskBoundary, LShapeKeepsLargestComponent) {
  BinaryGrid g(6, 6);
  // L: column x=0..1 rows 0..3 plus row 2..3 extending to x=3; a stray pixel far away.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) g.set(x, y);
  for (int x = 2; x < 4; ++x)
    for (int y = 2; y < 4; ++y) g.set(x, y);
  g.set(5, 5);
  const auto ring = mask_boundary(rle_encode(g));
  const std::set<std::pair<int, int>> corners(ring.begin(), ring.end());
  EXPECT_EQ(corners, (std::set<std::pair<int, int>>{{0, 0}, {2, 0}, {2, 2}, {4, 2}, {4, 4}, {0, 4}}));
  EXPECT_EQ(ring.size(), 6u);
}

TEST(ExportLabels, PolygonNormalized) {
  BinaryGrid g(10, 10);
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 5; ++y) g.set(x, y);
  Detection d = box_det({0, 0, 10, 5});
  d.mask = rle_encode(g);
  const auto r = export_labels({d}, 10, 10);
  const std::set<std::pair<double, double>> pts(r[0].polygon.begin(), r[0].polygon.end());
  EXPECT_EQ(pts, (std::set<std::pair<double, double>>{{0, 0}, {1, 0}, {1, 0.5}, {0, 0.5}}));
}

TEST(MergeOverrides, ReplacesPerImage) {
  std::map<std::string, std::vector<LabelRecord>> labels{
      {"000001", {{0, 0.5, 0.5, 0.1, 0.1, {}}, {0, 0.2, 0.2, 0.1, 0.1, {}}}},
      {"000006", {{0, 0.4, 0.4, 0.1, 0.1, {}}}}};
  merge_overrides(labels, {{"000001", {{1, 0.3, 0.3, 0.2, 0.2, {}}}}, {"000011", {}}});
  ASSERT_EQ(labels["000001"].size(), 1u);
  EXPECT_EQ(labels["000001"][0].class_id, 1);
  EXPECT_EQ(labels["000006"].size(), 1u);
  EXPECT_TRUE(labels.count("000011"));
}
