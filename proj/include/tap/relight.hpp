#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tap/error.hpp"

namespace tap::relight {

/// Single-channel luminance plane, row-major, values in [0,255].
struct LumaImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  LumaImage() = default;
  LumaImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(w) * h, fill);
  }

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const LumaImage&, const LumaImage&) = default;
};

/// BT.601 luma from 8-bit RGB.
inline std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

/// Piecewise-linear function over luminance. Knot luminances strictly
/// increase and cover [0,255].
class PiecewiseLinear {
 public:
  using Knot = std::pair<double, double>;

  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<Knot> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw Error(ErrorCode::InvalidConfig, "curve needs at least two knots");
    if (knots_.front().first != 0.0 || knots_.back().first != 255.0) {
      throw Error(ErrorCode::InvalidConfig, "curve knots must span [0,255]");
    }
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (!(knots_[i].second > 0.0) || !std::isfinite(knots_[i].second)) {
        throw Error(ErrorCode::InvalidConfig, "curve factors must be positive");
      }
      if (i > 0 && !(knots_[i].first > knots_[i - 1].first)) {
        throw Error(ErrorCode::InvalidConfig, "knot luminances must strictly increase");
      }
    }
  }

  double operator()(double luminance) const {
    const double l = std::clamp(luminance, 0.0, 255.0);
    auto hi = std::upper_bound(knots_.begin(), knots_.end(), l,
                               [](double v, const Knot& k) { return v < k.first; });
    if (hi == knots_.end()) return knots_.back().second;
    if (hi == knots_.begin()) return knots_.front().second;
    auto lo = hi - 1;
    const double t = (l - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
  }

  bool non_increasing() const {
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (knots_[i].second > knots_[i - 1].second) return false;
    }
    return true;
  }

  const std::vector<Knot>& knots() const { return knots_; }

  friend bool operator==(const PiecewiseLinear&, const PiecewiseLinear&) = default;

 private:
  std::vector<Knot> knots_;
};

/// Luminance gain alpha(L) and contrast gain beta(L), both non-increasing.
struct RelightCurves {
  PiecewiseLinear alpha;
  PiecewiseLinear beta;

  RelightCurves() = default;
  RelightCurves(PiecewiseLinear a, PiecewiseLinear b) : alpha(std::move(a)), beta(std::move(b)) {
    if (!alpha.non_increasing() || !beta.non_increasing()) {
      throw Error(ErrorCode::InvalidConfig, "relight curves must be non-increasing in luminance");
    }
  }

  friend bool operator==(const RelightCurves&, const RelightCurves&) = default;
};

inline RelightCurves default_curves() {
  return RelightCurves(PiecewiseLinear({{0, 1.0}, {128, 1.0}, {200, 0.9}, {255, 0.7}}),
                       PiecewiseLinear({{0, 1.4}, {80, 1.2}, {128, 1.0}, {255, 1.0}}));
}

inline RelightCurves identity_curves() {
  return RelightCurves(PiecewiseLinear({{0, 1.0}, {255, 1.0}}),
                       PiecewiseLinear({{0, 1.0}, {255, 1.0}}));
}

inline double frame_luminance(const LumaImage& img) {
  if (img.pixels.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");
  std::uint64_t sum = 0;
  for (auto p : img.pixels) sum += p;
  return static_cast<double>(sum) / static_cast<double>(img.pixels.size());
}

/// Each pixel p becomes clamp(alpha * (L + beta * (p - L))), L being the
/// frame mean. Output is rounded to nearest.
inline LumaImage relight(const LumaImage& img, const RelightCurves& curves) {
  const double L = frame_luminance(img);
  const double a = curves.alpha(L);
  const double b = curves.beta(L);
  // Precompute per input level; output only depends on value and mean.
  std::array<std::uint8_t, 256> lut{};
  for (int p = 0; p < 256; ++p) {
    const double v = a * (L + b * (p - L));
    lut[p] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  LumaImage out = img;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

}  // namespace tap::relight
