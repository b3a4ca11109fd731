#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "tap/depth_filter.hpp"
#include "tap/error.hpp"
#include "tap/geometry.hpp"
#include "tap/metrics.hpp"

namespace tap::synth {

/// xoshiro256** seeded through splitmix64. Both recurrences are spelled out
/// in docs/formats.md; outputs are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }

  /// Standard normal by Box-Muller; u1 is drawn from (0, 1].
  double normal() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Knuth's product method; fine for the small means used here.
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
};

enum class MotionKind { Linear, Sinusoidal, Mixed };

struct DepthRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
};

/// During [first_frame, last_frame] the occluded foreground object is
/// hidden behind the occluder and produces no detection.
struct OcclusionEvent {
  int first_frame = 0;
  int last_frame = 0;
  int occluder = 0;
  int occluded = 0;
};

struct ScenarioConfig {
  std::string sequence_id = "synth";
  int num_foreground = 6;
  int num_background = 4;
  int frame_count = 60;
  int image_width = 640;
  int image_height = 480;
  MotionKind motion = MotionKind::Linear;
  std::vector<OcclusionEvent> occlusions;
  double detection_noise_sigma = 0.0;
  double confidence_noise = 0.0;
  double base_confidence = 0.9;
  double false_positive_rate = 0.0;
  double miss_rate = 0.0;
  DepthRange foreground_depth{500, 1100};
  DepthRange background_depth{1300, 3000};
  std::uint16_t far_plane = 4000;
  bool ablation_mode = false;
  std::uint32_t tau_d = depth::kDefaultTauD;
  int embedding_dim = 16;
  double embedding_noise = 0.0;
  double min_size = 24.0;
  double max_size = 48.0;
  double max_speed = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (frame_count <= 0) fail("frame_count must be positive");
    if (image_width <= 0 || image_height <= 0) fail("image dimensions must be positive");
    if (num_foreground < 0 || num_background < 0) fail("object counts must be nonnegative");
    if (foreground_depth.lo == 0 || foreground_depth.lo > foreground_depth.hi) {
      fail("foreground depth range is empty or includes 0");
    }
    if (background_depth.lo == 0 || background_depth.lo > background_depth.hi) {
      fail("background depth range is empty or includes 0");
    }
    if (foreground_depth.hi > 65535 || background_depth.hi > 65535) fail("depth exceeds 16 bits");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(miss_rate) || !unit(confidence_noise) || !unit(base_confidence)) {
      fail("rates must lie in [0,1]");
    }
    if (!(false_positive_rate >= 0.0) || !(detection_noise_sigma >= 0.0) || !(embedding_noise >= 0.0)) {
      fail("noise parameters must be nonnegative");
    }
    if (embedding_dim < 1) fail("embedding_dim must be positive");
    if (!(min_size >= 2.0) || min_size > max_size ||
        max_size >= std::min(image_width, image_height) - 2) {
      fail("object size range must fit inside the image");
    }
    if (!(max_speed >= 0.0)) fail("max_speed must be nonnegative");
    for (const auto& o : occlusions) {
      if (o.first_frame > o.last_frame || o.occluder < 0 || o.occluded < 0 ||
          o.occluder >= num_foreground || o.occluded >= num_foreground) {
        fail("occlusion event refers to an invalid span or object");
      }
    }
    if (ablation_mode) {
      if (tau_d == 0) fail("tau_d must be positive");
      if (background_depth.lo < tau_d) fail("background depth range must lie at or beyond tau_d");
      if (foreground_depth.hi >= tau_d) fail("foreground depth range must lie below tau_d");
      if (far_plane < tau_d) fail("far plane must lie at or beyond tau_d");
    }
  }
};

enum class Source { Foreground, Clutter, FalsePositive };

struct SyntheticSequence {
  metrics::AnnotatedSequence gt;
  std::vector<std::vector<Detection>> detections;
  /// Parallel to `detections`: where each detection came from, and the gt
  /// id for foreground ones (0 otherwise).
  std::vector<std::vector<Source>> sources;
  std::vector<std::vector<int>> object_ids;
  std::vector<depth::DepthMap> depth;
};

namespace detail {

struct Object {
  double w = 0, h = 0;
  double cx0 = 0, cy0 = 0;
  double vx = 0, vy = 0;
  bool sinusoidal = false;
  double ax = 0, ay = 0, period = 1, phase_x = 0, phase_y = 0;
  std::uint16_t depth = 0;
  std::vector<float> embedding;

  BoundingBox box_at(int t) const {
    double cx = cx0, cy = cy0;
    if (sinusoidal) {
      const double w0 = 2.0 * std::numbers::pi * t / period;
      cx += ax * std::sin(w0 + phase_x);
      cy += ay * std::sin(w0 + phase_y);
    } else {
      cx += vx * t;
      cy += vy * t;
    }
    return BoundingBox::from_center(cx, cy, w, h);
  }
};

inline std::vector<float> random_unit(Rng& rng, int dim) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& f : v) f = static_cast<float>(rng.normal());
  if (embedding_norm(v) == 0.0) v[0] = 1.0f;
  return normalized(std::move(v));
}

inline Object make_object(Rng& rng, const ScenarioConfig& cfg, bool sinusoidal, DepthRange range) {
  Object o;
  o.w = rng.uniform(cfg.min_size, cfg.max_size);
  o.h = rng.uniform(cfg.min_size, cfg.max_size);
  // One pixel of margin keeps rounding from pushing a box past the border.
  const double W = cfg.image_width - 2.0, H = cfg.image_height - 2.0;
  const double steps = std::max(1, cfg.frame_count - 1);
  o.sinusoidal = sinusoidal;
  if (sinusoidal) {
    o.ax = rng.uniform(0.0, std::min(4.0 * cfg.max_speed, (W - o.w) / 2.0));
    o.ay = rng.uniform(0.0, std::min(4.0 * cfg.max_speed, (H - o.h) / 2.0));
    o.period = rng.uniform(20.0, 60.0);
    o.phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    o.cx0 = rng.uniform(o.w / 2 + o.ax, W - o.w / 2 - o.ax);
    o.cy0 = rng.uniform(o.h / 2 + o.ay, H - o.h / 2 - o.ay);
    o.cx0 += 1.0;
    o.cy0 += 1.0;
  } else {
    o.vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
    o.vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
    // Keep the whole trajectory inside the frame.
    const double room_x = (W - o.w) / 2.0, room_y = (H - o.h) / 2.0;
    if (std::abs(o.vx) * steps > room_x) o.vx = std::copysign(room_x / steps, o.vx);
    if (std::abs(o.vy) * steps > room_y) o.vy = std::copysign(room_y / steps, o.vy);
    const double tx = o.vx * steps, ty = o.vy * steps;
    o.cx0 = rng.uniform(o.w / 2 + std::max(0.0, -tx), W - o.w / 2 - std::max(0.0, tx));
    o.cy0 = rng.uniform(o.h / 2 + std::max(0.0, -ty), H - o.h / 2 - std::max(0.0, ty));
    o.cx0 += 1.0;
    o.cy0 += 1.0;
  }
  o.depth = static_cast<std::uint16_t>(rng.uniform_int(range.lo, range.hi));
  o.embedding = random_unit(rng, cfg.embedding_dim);
  return o;
}

inline BoundingBox clip(const BoundingBox& b, int w, int h) {
  return {std::clamp(b.x_min, 0.0, static_cast<double>(w)), std::clamp(b.y_min, 0.0, static_cast<double>(h)),
          std::clamp(b.x_max, 0.0, static_cast<double>(w)), std::clamp(b.y_max, 0.0, static_cast<double>(h))};
}

}  // namespace detail

/// Builds one scenario. Identical configs give bit-identical output.
inline SyntheticSequence generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int W = cfg.image_width, H = cfg.image_height;

  auto sinusoidal_for = [&](int k) {
    switch (cfg.motion) {
      case MotionKind::Linear: return false;
      case MotionKind::Sinusoidal: return true;
      case MotionKind::Mixed: return k % 2 == 1;
    }
    return false;
  };

  std::vector<detail::Object> fg, bg;
  for (int k = 0; k < cfg.num_foreground; ++k) {
    fg.push_back(detail::make_object(rng, cfg, sinusoidal_for(k), cfg.foreground_depth));
  }
  for (int k = 0; k < cfg.num_background; ++k) {
    bg.push_back(detail::make_object(rng, cfg, sinusoidal_for(k), cfg.background_depth));
  }

  // Painting order: farthest first so nearer objects overwrite.
  std::vector<const detail::Object*> paint;
  for (const auto& o : fg) paint.push_back(&o);
  for (const auto& o : bg) paint.push_back(&o);
  std::stable_sort(paint.begin(), paint.end(),
                   [](const detail::Object* a, const detail::Object* b) { return a->depth > b->depth; });

  SyntheticSequence seq;
  seq.gt.sequence_id = cfg.sequence_id;
  seq.gt.frames.resize(static_cast<std::size_t>(cfg.frame_count));
  seq.detections.resize(seq.gt.frames.size());
  seq.sources.resize(seq.gt.frames.size());
  seq.object_ids.resize(seq.gt.frames.size());

  auto occluded = [&](int k, int t) {
    for (const auto& o : cfg.occlusions) {
      if (o.occluded == k && t >= o.first_frame && t <= o.last_frame) return true;
    }
    return false;
  };

  const depth::DepthFilterConfig depth_cfg(cfg.ablation_mode ? cfg.tau_d : depth::kDefaultTauD);

  for (int t = 0; t < cfg.frame_count; ++t) {
    depth::DepthMap map(W, H, cfg.far_plane);
    for (const auto* o : paint) {
      const PixelSpan s = pixel_span(o->box_at(t), W, H);
      for (int y = s.y0; y < s.y1; ++y) {
        for (int x = s.x0; x < s.x1; ++x) map.at(x, y) = o->depth;
      }
    }

    auto& dets = seq.detections[static_cast<std::size_t>(t)];
    auto& srcs = seq.sources[static_cast<std::size_t>(t)];
    auto& ids = seq.object_ids[static_cast<std::size_t>(t)];

    auto emit = [&](const detail::Object& o, Source src, int id) {
      // Draws happen unconditionally so the stream layout does not depend
      // on which detections survive.
      const bool missed = rng.uniform() < cfg.miss_rate;
      const BoundingBox truth = o.box_at(t);
      BoundingBox noisy{truth.x_min + cfg.detection_noise_sigma * rng.normal(),
                        truth.y_min + cfg.detection_noise_sigma * rng.normal(),
                        truth.x_max + cfg.detection_noise_sigma * rng.normal(),
                        truth.y_max + cfg.detection_noise_sigma * rng.normal()};
      const double conf = std::clamp(cfg.base_confidence - cfg.confidence_noise * rng.uniform(), 0.0, 1.0);
      std::vector<float> emb = o.embedding;
      for (auto& f : emb) f += static_cast<float>(cfg.embedding_noise * rng.normal());
      if (missed || (src == Source::Foreground && occluded(id - 1, t))) return;
      noisy = detail::clip(noisy, W, H);
      if (!(noisy.width() >= 1.0 && noisy.height() >= 1.0)) return;
      Detection d;
      d.frame_index = t;
      d.box = noisy;
      d.confidence = conf;
      d.embedding = normalized(std::move(emb));
      if (cfg.ablation_mode) {
        const auto layer = depth::classify(depth::instance_depth(map, d), depth_cfg);
        if ((src == Source::Foreground) != (layer == depth::Layer::Foreground)) return;
      }
      dets.push_back(std::move(d));
      srcs.push_back(src);
      ids.push_back(src == Source::Foreground ? id : 0);
    };

    for (int k = 0; k < cfg.num_foreground; ++k) {
      const int id = k + 1;
      seq.gt.frames[static_cast<std::size_t>(t)].push_back({id, fg[static_cast<std::size_t>(k)].box_at(t)});
      emit(fg[static_cast<std::size_t>(k)], Source::Foreground, id);
    }
    for (const auto& o : bg) emit(o, Source::Clutter, 0);

    const int n_fp = rng.poisson(cfg.false_positive_rate);
    for (int f = 0; f < n_fp; ++f) {
      constexpr int kAttempts = 16;
      for (int attempt = 0; attempt < kAttempts; ++attempt) {
        const double w = rng.uniform(cfg.min_size, cfg.max_size);
        const double h = rng.uniform(cfg.min_size, cfg.max_size);
        const double cx = rng.uniform(w / 2, W - w / 2);
        const double cy = rng.uniform(h / 2, H - h / 2);
        const double conf = std::clamp(cfg.base_confidence - cfg.confidence_noise * rng.uniform(), 0.0, 1.0);
        Detection d;
        d.frame_index = t;
        d.box = BoundingBox::from_center(cx, cy, w, h);
        d.confidence = conf;
        d.embedding = detail::random_unit(rng, cfg.embedding_dim);
        if (cfg.ablation_mode &&
            depth::classify(depth::instance_depth(map, d), depth_cfg) == depth::Layer::Foreground) {
          continue;
        }
        dets.push_back(std::move(d));
        srcs.push_back(Source::FalsePositive);
        ids.push_back(0);
        break;
      }
    }
    seq.depth.push_back(std::move(map));
  }
  return seq;
}

}  // namespace tap::synth
