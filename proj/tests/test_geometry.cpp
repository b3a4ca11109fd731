#include <random>

#include <gtest/gtest.h>

#include "tap/geometry.hpp"

using namespace tap;

TEST(Iou, IdenticalBoxes) {
  const BoundingBox b{2, 3, 12, 9};
  EXPECT_DOUBLE_EQ(iou(b, b), 1.0);
}

TEST(Iou, DisjointBoxes) {
  EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
}

TEST(Iou, HalfShiftedSquare) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(Iou, DegenerateBoxesGiveZero) {
  EXPECT_EQ(iou({1, 1, 1, 1}, {1, 1, 1, 1}), 0.0);
  EXPECT_EQ(iou({0, 0, 0, 5}, {0, 0, 4, 5}), 0.0);
}

// Integer boxes: count covered unit cells directly.
TEST(Iou, MatchesCellCountingOnIntegerBoxes) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coord(0, 12);
  for (int trial = 0; trial < 300; ++trial) {
    auto make = [&] {
      int a = coord(rng), b = coord(rng), c = coord(rng), d = coord(rng);
      if (a > b) std::swap(a, b);
      if (c > d) std::swap(c, d);
      return BoundingBox{double(a), double(c), double(b), double(d)};
    };
    const auto p = make(), q = make();
    int inter = 0, uni = 0;
    for (int x = 0; x < 12; ++x) {
      for (int y = 0; y < 12; ++y) {
        const bool in_p = x >= p.x_min && x < p.x_max && y >= p.y_min && y < p.y_max;
        const bool in_q = x >= q.x_min && x < q.x_max && y >= q.y_min && y < q.y_max;
        inter += in_p && in_q;
        uni += in_p || in_q;
      }
    }
    const double expected = uni == 0 ? 0.0 : double(inter) / uni;
    EXPECT_NEAR(iou(p, q), expected, 1e-15);
    EXPECT_EQ(iou(p, q), iou(q, p));
  }
}

TEST(Rle, AllZero) {
  BinaryGrid g(4, 4);
  EXPECT_EQ(rle_encode(g).runs, (std::vector<std::uint32_t>{16}));
}

TEST(Rle, AllOne) {
  BinaryGrid g(4, 4);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) g.set(x, y);
  EXPECT_EQ(rle_encode(g).runs, (std::vector<std::uint32_t>{0, 16}));
}

TEST(Rle, ColumnMajorTopLeft) {
  BinaryGrid g(2, 2);
  g.set(0, 0);
  EXPECT_EQ(rle_encode(g).runs, (std::vector<std::uint32_t>{0, 1, 3}));
}

TEST(Rle, ColumnMajorOrder) {
  // 3 wide, 2 tall; (1,0) is the third pixel in column-major order.
  BinaryGrid g(3, 2);
  g.set(1, 0);
  EXPECT_EQ(rle_encode(g).runs, (std::vector<std::uint32_t>{2, 1, 3}));
}

TEST(Rle, RandomRoundTrip) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + int(rng() % 9), h = 1 + int(rng() % 9);
    BinaryGrid g(w, h);
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) g.set(x, y, rng() % 3 == 0);
    const auto m = rle_encode(g);
    EXPECT_EQ(rle_decode(m), g);
    std::uint64_t set = 0;
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) set += g.at(x, y);
    EXPECT_EQ(mask_area(m), set);
  }
}

TEST(Rle, DecodeRejectsBadRunSum) {
  Mask m{2, 2, {1, 2}};
  try {
    rle_decode(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RunLengthMismatch);
  }
}

TEST(MaskToBbox, FullMask) {
  Mask m{5, 3, {0, 15}};
  EXPECT_EQ(mask_to_bbox(m), (BoundingBox{0, 0, 5, 3}));
}

TEST(MaskToBbox, SinglePixel) {
  BinaryGrid g(8, 8);
  g.set(3, 5);
  EXPECT_EQ(mask_to_bbox(rle_encode(g)), (BoundingBox{3, 5, 4, 6}));
}

TEST(MaskToBbox, TwoPixels) {
  BinaryGrid g(8, 8);
  g.set(1, 1);
  g.set(4, 2);
  EXPECT_EQ(mask_to_bbox(rle_encode(g)), (BoundingBox{1, 1, 5, 3}));
}

TEST(MaskToBbox, EmptyMaskThrows) {
  try {
    mask_to_bbox(Mask{3, 3, {9}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
}

TEST(DetectionValidate, Invariants) {
  Detection d;
  d.box = {0, 0, 4, 4};
  EXPECT_NO_THROW(validate(d));
  d.confidence = 1.5;
  EXPECT_THROW(validate(d), Error);
  d.confidence = 0.5;
  d.embedding = std::vector<float>{1.0f, 1.0f};
  EXPECT_THROW(validate(d), Error);
  d.embedding = normalized(*d.embedding);
  EXPECT_NO_THROW(validate(d));
  d.mask = Mask{4, 4, {16}};
  EXPECT_NO_THROW(validate(d, std::pair{4, 4}));
  try {
    validate(d, std::pair{5, 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(TrackObserve, RejectsRepeatedFrame) {
  Track t;
  t.track_id = 1;
  Detection d;
  d.frame_index = 3;
  t.observe(d);
  EXPECT_THROW(t.observe(d), Error);
  d.frame_index = 4;
  t.observe(d);
  EXPECT_EQ(t.length(), 2u);
}
