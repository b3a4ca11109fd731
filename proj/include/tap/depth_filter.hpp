#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tap/error.hpp"
#include "tap/geometry.hpp"

namespace tap::depth {

/// Raw sensor depth, row-major. Zero means the sensor returned nothing.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;

  DepthMap() = default;
  DepthMap(int w, int h, std::uint16_t fill = 0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "depth dimensions must be positive");
    values.assign(static_cast<std::size_t>(w) * h, fill);
  }

  std::uint16_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

inline constexpr std::uint32_t kDefaultTauD = 1200;

struct DepthFilterConfig {
  std::uint32_t tau_d = kDefaultTauD;

  explicit DepthFilterConfig(std::uint32_t tau = kDefaultTauD) : tau_d(tau) {
    if (tau == 0) throw Error(ErrorCode::InvalidConfig, "tau_d must be positive");
  }
};

enum class Layer { Foreground, Background };

/// Median of the nonzero depth readings under the detection's mask, or
/// under its box when it has no mask. Even counts take the lower middle.
inline std::uint32_t instance_depth(const DepthMap& depth, const Detection& det) {
  std::vector<std::uint16_t> samples;
  if (det.mask) {
    if (det.mask->width != depth.width || det.mask->height != depth.height) {
      throw Error(ErrorCode::DimensionMismatch, "mask and depth map dimensions differ");
    }
    for_each_set_pixel(*det.mask, [&](int x, int y) {
      if (auto v = depth.at(x, y); v != 0) samples.push_back(v);
    });
  } else {
    const PixelSpan s = pixel_span(det.box, depth.width, depth.height);
    for (int y = s.y0; y < s.y1; ++y) {
      for (int x = s.x0; x < s.x1; ++x) {
        if (auto v = depth.at(x, y); v != 0) samples.push_back(v);
      }
    }
  }
  if (samples.empty()) throw Error(ErrorCode::NoDepthSupport, "no nonzero depth under detection");
  const std::size_t mid = (samples.size() - 1) / 2;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(mid), samples.end());
  return samples[mid];
}

inline Layer classify(std::uint32_t depth_value, const DepthFilterConfig& cfg) {
  return depth_value < cfg.tau_d ? Layer::Foreground : Layer::Background;
}

struct FilterResult {
  std::vector<Detection> retained;
  /// Indices (into the input) of retained detections that had no depth
  /// support and were kept unclassified.
  std::vector<std::size_t> unsupported;
  /// Input indices of discarded background detections.
  std::vector<std::size_t> discarded;
};

/// Drops background detections, preserving order. Detections without any
/// depth reading are kept and listed in `unsupported`.
inline FilterResult filter_detections(const std::vector<Detection>& dets, const DepthMap& depth,
                                      const DepthFilterConfig& cfg, int frame_width,
                                      int frame_height) {
  if (depth.width != frame_width || depth.height != frame_height) {
    throw Error(ErrorCode::DimensionMismatch,
                "depth map is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                    ", frame is " + std::to_string(frame_width) + "x" + std::to_string(frame_height));
  }
  FilterResult result;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    try {
      if (classify(instance_depth(depth, dets[i]), cfg) == Layer::Foreground) {
        result.retained.push_back(dets[i]);
      } else {
        result.discarded.push_back(i);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoDepthSupport) throw;
      result.unsupported.push_back(i);
      result.retained.push_back(dets[i]);
    }
  }
  return result;
}

}  // namespace tap::depth
