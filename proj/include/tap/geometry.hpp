#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tap/error.hpp"

namespace tap {

/// Axis-aligned box in pixel coordinates, origin top-left. Boxes are
/// half-open, so the single pixel (x, y) is the box (x, y, x+1, y+1).
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
  }

  static BoundingBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  static BoundingBox from_tlwh(double x, double y, double w, double h) {
    return {x, y, x + w, y + h};
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

/// Intersection over union; 0 when the union is empty.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Integer pixel range [x0, x1) x [y0, y1) covered by a box, clipped to a
/// width x height grid. Painting and sampling both go through this.
struct PixelSpan {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};

inline PixelSpan pixel_span(const BoundingBox& box, int width, int height) {
  auto clip = [](double v, int hi) {
    if (!(v > 0.0)) return 0;
    if (v >= hi) return hi;
    return static_cast<int>(v);
  };
  PixelSpan s;
  s.x0 = clip(std::floor(box.x_min), width);
  s.y0 = clip(std::floor(box.y_min), height);
  s.x1 = clip(std::ceil(box.x_max), width);
  s.y1 = clip(std::ceil(box.y_max), height);
  return s;
}

/// Dense binary grid, row-major.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
    }
    cells_.assign(static_cast<std::size_t>(width) * height, 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return cells_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { cells_[index(x, y)] = v ? 1 : 0; }

  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Run-length encoded binary mask. Runs alternate zero/one counts over the
/// column-major scan, starting with a (possibly empty) run of zeros, the
/// same layout COCO uses for uncompressed RLE.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline Mask rle_encode(const BinaryGrid& grid) {
  Mask m{grid.width(), grid.height(), {}};
  bool current = false;
  std::uint32_t count = 0;
  for (int x = 0; x < grid.width(); ++x) {
    for (int y = 0; y < grid.height(); ++y) {
      if (grid.at(x, y) != current) {
        m.runs.push_back(count);
        count = 0;
        current = !current;
      }
      ++count;
    }
  }
  m.runs.push_back(count);
  return m;
}

inline void validate_runs(const Mask& mask) {
  if (mask.width <= 0 || mask.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "mask dimensions must be positive");
  }
  std::uint64_t total = 0;
  for (auto r : mask.runs) total += r;
  const auto expected = static_cast<std::uint64_t>(mask.width) * mask.height;
  if (total != expected) {
    throw Error(ErrorCode::RunLengthMismatch,
                "runs sum to " + std::to_string(total) + ", expected " +
                    std::to_string(expected));
  }
}

/// Calls fn(x, y) for each set pixel in column-major order.
template <typename Fn>
void for_each_set_pixel(const Mask& mask, Fn&& fn) {
  std::uint64_t pos = 0;
  bool value = false;
  const auto h = static_cast<std::uint64_t>(mask.height);
  for (auto run : mask.runs) {
    if (value) {
      for (std::uint64_t p = pos; p < pos + run; ++p) {
        fn(static_cast<int>(p / h), static_cast<int>(p % h));
      }
    }
    pos += run;
    value = !value;
  }
}

inline BinaryGrid rle_decode(const Mask& mask) {
  validate_runs(mask);
  BinaryGrid grid(mask.width, mask.height);
  for_each_set_pixel(mask, [&](int x, int y) { grid.set(x, y); });
  return grid;
}

inline std::uint64_t mask_area(const Mask& mask) {
  std::uint64_t area = 0;
  for (std::size_t i = 1; i < mask.runs.size(); i += 2) area += mask.runs[i];
  return area;
}

/// Tightest half-open box around the set pixels.
inline BoundingBox mask_to_bbox(const Mask& mask) {
  validate_runs(mask);
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for_each_set_pixel(mask, [&](int x, int y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  });
  if (x1 < 0) throw Error(ErrorCode::EmptyMask, "mask has no set pixel");
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
          static_cast<double>(y1 + 1)};
}

struct Detection {
  std::int64_t frame_index = 0;
  BoundingBox box;
  double confidence = 1.0;
  std::optional<Mask> mask;
  std::optional<std::vector<float>> embedding;
  int class_id = 0;
};

inline double embedding_norm(const std::vector<float>& v) {
  double s = 0.0;
  for (float f : v) s += static_cast<double>(f) * f;
  return std::sqrt(s);
}

/// Checks the Detection invariants. Frame dimensions are checked against
/// the mask only when both are known.
inline void validate(const Detection& d, std::optional<std::pair<int, int>> frame_dims = {}) {
  if (d.frame_index < 0) {
    throw Error(ErrorCode::InvalidArgument, "negative frame index");
  }
  if (!d.box.valid()) throw Error(ErrorCode::InvalidArgument, "invalid bounding box");
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence outside [0,1]");
  }
  if (d.embedding && std::abs(embedding_norm(*d.embedding) - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "embedding is not unit-norm");
  }
  if (d.mask) {
    validate_runs(*d.mask);
    if (frame_dims && (d.mask->width != frame_dims->first || d.mask->height != frame_dims->second)) {
      throw Error(ErrorCode::DimensionMismatch, "mask dimensions differ from frame");
    }
  }
}

/// Scales a vector to unit length in double precision; zero vectors are
/// returned unchanged.
inline std::vector<float> normalized(std::vector<float> v) {
  const double n = embedding_norm(v);
  if (n > 0.0) {
    for (float& f : v) f = static_cast<float>(f / n);
  }
  return v;
}

enum class TrackStatus { Tentative, Confirmed, Lost, Removed };

struct Track {
  int track_id = 0;
  std::vector<std::pair<std::int64_t, Detection>> observations;
  TrackStatus status = TrackStatus::Tentative;

  std::size_t length() const { return observations.size(); }

  /// Appends an observation; frames must be strictly increasing.
  void observe(const Detection& det) {
    if (!observations.empty() && det.frame_index <= observations.back().first) {
      throw Error(ErrorCode::NonMonotonicFrame,
                  "track " + std::to_string(track_id) + " already has frame " +
                      std::to_string(observations.back().first));
    }
    observations.emplace_back(det.frame_index, det);
  }
};

}  // namespace tap
