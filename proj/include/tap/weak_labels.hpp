#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "tap/error.hpp"
#include "tap/geometry.hpp"

namespace tap::labels {

struct SubsampleSpec {
  std::int64_t total_frames = 0;
  std::int64_t interval = 5;
};

/// N = floor(T / I) frames, anchored at 0 with stride I.
inline std::vector<std::int64_t> subsample_indices(const SubsampleSpec& spec) {
  if (spec.interval < 1) throw Error(ErrorCode::InvalidArgument, "interval must be >= 1");
  if (spec.total_frames < 0) throw Error(ErrorCode::InvalidArgument, "negative frame count");
  const std::int64_t n = spec.total_frames / spec.interval;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) out.push_back(k * spec.interval);
  return out;
}

inline double sigmoid(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

struct LabelCandidate {
  BoundingBox box;
  double logit = 0.0;
  std::string image_id;
  int class_id = 0;
};

struct LabelThreshold {
  double tau = 0.35;

  explicit LabelThreshold(double t = 0.35) : tau(t) {
    if (!(t > 0.0 && t < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "label threshold must lie in (0,1)");
    }
  }
};

/// Keeps candidates whose sigmoid confidence is at least tau (inclusive).
inline std::vector<LabelCandidate> confidence_filter(const std::vector<LabelCandidate>& candidates,
                                                     const LabelThreshold& threshold) {
  std::vector<LabelCandidate> kept;
  for (const auto& c : candidates) {
    if (!std::isfinite(c.logit)) throw Error(ErrorCode::InvalidArgument, "non-finite logit");
    if (sigmoid(c.logit) >= threshold.tau) kept.push_back(c);
  }
  return kept;
}

struct LabelRecord {
  int class_id = 0;
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
  std::vector<std::pair<double, double>> polygon;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

namespace detail {

// Pixel-corner boundary walk. Directed boundary edges keep the set pixel on
// the right-hand side in image coordinates (y down), so the outer ring comes
// out clockwise on screen. At a diagonal pinch the walk turns right, which
// keeps the ring on a single 4-connected component.
inline std::vector<std::pair<int, int>> trace_outer_ring(const BinaryGrid& g) {
  const int w = g.width(), h = g.height();
  auto set = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && g.at(x, y); };

  int sx = -1, sy = -1;
  for (int y = 0; y < h && sx < 0; ++y) {
    for (int x = 0; x < w; ++x) {
      if (g.at(x, y)) {
        sx = x;
        sy = y;
        break;
      }
    }
  }
  if (sx < 0) return {};

  // Directions: 0 right, 1 down, 2 left, 3 up.
  constexpr std::array<int, 4> dx{1, 0, -1, 0};
  constexpr std::array<int, 4> dy{0, 1, 0, -1};
  // Edge leaving corner (x,y) in direction d is a boundary edge when the
  // pixel on its right is set and the pixel on its left is not.
  auto right_pixel = [&](int x, int y, int d) -> std::pair<int, int> {
    switch (d) {
      case 0: return {x, y};
      case 1: return {x - 1, y};
      case 2: return {x - 1, y - 1};
      default: return {x, y - 1};
    }
  };
  auto left_pixel = [&](int x, int y, int d) -> std::pair<int, int> {
    switch (d) {
      case 0: return {x, y - 1};
      case 1: return {x, y};
      case 2: return {x - 1, y};
      default: return {x - 1, y - 1};
    }
  };
  auto is_boundary = [&](int x, int y, int d) {
    auto [rx, ry] = right_pixel(x, y, d);
    auto [lx, ly] = left_pixel(x, y, d);
    return set(rx, ry) && !set(lx, ly);
  };

  std::vector<std::pair<int, int>> ring;
  int x = sx, y = sy, d = 0;
  const int start_x = sx, start_y = sy;
  const std::size_t limit = 4 * static_cast<std::size_t>(w + 1) * (h + 1);
  for (std::size_t steps = 0; steps < limit; ++steps) {
    ring.emplace_back(x, y);
    x += dx[d];
    y += dy[d];
    if (x == start_x && y == start_y) break;
    // Prefer right turn, then straight, then left.
    for (int turn : {1, 0, 3}) {
      const int nd = (d + turn) % 4;
      if (is_boundary(x, y, nd)) {
        d = nd;
        break;
      }
    }
  }

  // Drop collinear corners.
  std::vector<std::pair<int, int>> simplified;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& prev = ring[(i + n - 1) % n];
    const auto& cur = ring[i];
    const auto& next = ring[(i + 1) % n];
    const long cross = static_cast<long>(cur.first - prev.first) * (next.second - cur.second) -
                       static_cast<long>(cur.second - prev.second) * (next.first - cur.first);
    if (cross != 0) simplified.push_back(cur);
  }
  return simplified;
}

// Largest 4-connected component; ties go to the one found first in
// row-major order.
inline BinaryGrid largest_component(const BinaryGrid& g) {
  const int w = g.width(), h = g.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!g.at(x, y) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
      std::size_t size = 0;
      std::queue<std::pair<int, int>> q;
      q.emplace(x, y);
      label[static_cast<std::size_t>(y) * w + x] = next;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        ++size;
        constexpr std::array<std::pair<int, int>, 4> nb{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (auto [ox, oy] : nb) {
          const int nx = cx + ox, ny = cy + oy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || !g.at(nx, ny)) continue;
          auto& l = label[static_cast<std::size_t>(ny) * w + nx];
          if (l >= 0) continue;
          l = next;
          q.emplace(nx, ny);
        }
      }
      if (size > best_size) {
        best_size = size;
        best = next;
      }
      ++next;
    }
  }
  BinaryGrid out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (best >= 0 && label[static_cast<std::size_t>(y) * w + x] == best) out.set(x, y);
    }
  }
  return out;
}

}  // namespace detail

/// Outer boundary of the mask's largest 4-connected component, as pixel
/// corner coordinates with collinear points removed.
inline std::vector<std::pair<int, int>> mask_boundary(const Mask& mask) {
  const BinaryGrid grid = rle_decode(mask);
  return detail::trace_outer_ring(detail::largest_component(grid));
}

/// Normalized (class, cx, cy, w, h) per detection, boxes clamped to the
/// image first. Masks contribute a normalized boundary polygon.
inline std::vector<LabelRecord> export_labels(const std::vector<Detection>& detections,
                                              int image_width, int image_height) {
  if (image_width <= 0 || image_height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }
  const double W = image_width, H = image_height;
  std::vector<LabelRecord> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    BoundingBox b{std::clamp(d.box.x_min, 0.0, W), std::clamp(d.box.y_min, 0.0, H),
                  std::clamp(d.box.x_max, 0.0, W), std::clamp(d.box.y_max, 0.0, H)};
    if (!(b.width() > 0.0 && b.height() > 0.0)) {
      throw Error(ErrorCode::DegenerateBox, "box has zero area after clamping to the image");
    }
    LabelRecord r;
    r.class_id = d.class_id;
    r.cx = b.center_x() / W;
    r.cy = b.center_y() / H;
    r.w = b.width() / W;
    r.h = b.height() / H;
    if (d.mask) {
      if (d.mask->width != image_width || d.mask->height != image_height) {
        throw Error(ErrorCode::DimensionMismatch, "mask dimensions differ from image");
      }
      for (auto [x, y] : mask_boundary(*d.mask)) r.polygon.emplace_back(x / W, y / H);
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Replaces every image present in `overrides` wholesale; other images are
/// left untouched.
inline void merge_overrides(std::map<std::string, std::vector<LabelRecord>>& labels,
                            const std::map<std::string, std::vector<LabelRecord>>& overrides) {
  for (const auto& [image_id, records] : overrides) labels[image_id] = records;
}

}  // namespace tap::labels
