#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tap/assignment.hpp"
#include "tap/error.hpp"
#include "tap/geometry.hpp"
#include "tap/kalman.hpp"

namespace tap {

struct TrackerConfig {
  double high_conf_threshold = 0.5;
  double low_conf_threshold = 0.1;
  /// Largest admissible 1 - IoU.
  double iou_gate = 0.7;
  /// Largest admissible halved cosine distance.
  double appearance_gate = 0.4;
  /// Weight of the IoU term in the fused cost.
  double fusion_lambda = 0.6;
  int max_age = 30;
  int min_hits = 3;
  double process_noise = 1.0;
  double measurement_noise = 1.0;
  /// Smoothing of per-track appearance features.
  double feature_momentum = 0.9;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(high_conf_threshold) || !unit(low_conf_threshold) || !unit(iou_gate) ||
        !unit(appearance_gate) || !unit(fusion_lambda) || !unit(feature_momentum)) {
      throw Error(ErrorCode::InvalidConfig, "tracker thresholds must lie in [0,1]");
    }
    if (low_conf_threshold > high_conf_threshold) {
      throw Error(ErrorCode::InvalidConfig, "low_conf_threshold exceeds high_conf_threshold");
    }
    if (max_age < 1 || min_hits < 1) {
      throw Error(ErrorCode::InvalidConfig, "max_age and min_hits must be positive");
    }
    if (!(process_noise > 0.0) || !(measurement_noise > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "noise scales must be positive");
    }
  }
};

/// Halved cosine distance between unit vectors, in [0,1].
inline double appearance_distance(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "embedding dimensions differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return std::clamp((1.0 - dot) / 2.0, 0.0, 1.0);
}

/// Fuses 1-IoU with appearance distance: lambda * iou + (1 - lambda) * app.
/// NaN appearance cells mean "no embedding for this pair"; those cells use
/// the IoU cost alone, and zero overlap is then never feasible.
inline CostMatrix fuse_costs(const CostMatrix& iou_cost, const std::optional<CostMatrix>& appearance,
                             const TrackerConfig& cfg) {
  if (appearance && (appearance->rows() != iou_cost.rows() || appearance->cols() != iou_cost.cols())) {
    throw Error(ErrorCode::ShapeMismatch, "IoU and appearance cost shapes differ");
  }
  const double lambda = cfg.fusion_lambda;
  CostMatrix fused(iou_cost.rows(), iou_cost.cols());
  for (Eigen::Index i = 0; i < iou_cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < iou_cost.cols(); ++j) {
      const double ic = iou_cost(i, j);
      const bool has_app = appearance && !std::isnan((*appearance)(i, j));
      if (ic > cfg.iou_gate) {
        fused(i, j) = kInfeasible;
      } else if (!has_app) {
        fused(i, j) = ic >= 1.0 ? kInfeasible : ic;
      } else {
        const double ac = (*appearance)(i, j);
        fused(i, j) = ac > cfg.appearance_gate ? kInfeasible : lambda * ic + (1.0 - lambda) * ac;
      }
    }
  }
  return fused;
}

struct TrackOutput {
  int track_id = 0;
  Detection detection;
};

/// Tracking-by-detection over one sequence. Frames must arrive in strictly
/// increasing order; one instance per sequence.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {})
      : cfg_(cfg), filter_({cfg.process_noise, cfg.measurement_noise}) {
    cfg_.validate();
  }

  const TrackerConfig& config() const { return cfg_; }

  std::vector<TrackOutput> step(std::int64_t frame, const std::vector<Detection>& detections,
                                const std::optional<kalman::AffineMotion>& motion = std::nullopt) {
    if (last_frame_ && frame <= *last_frame_) {
      throw Error(ErrorCode::NonMonotonicFrame, "frame " + std::to_string(frame) +
                                                    " does not follow frame " +
                                                    std::to_string(*last_frame_));
    }
    for (const auto& d : detections) {
      if (d.frame_index != frame) {
        throw Error(ErrorCode::InvalidArgument, "detection frame index differs from step frame");
      }
      validate(d);
    }
    const bool first_step = !last_frame_.has_value();
    last_frame_ = frame;

    predict_all(motion);

    std::vector<std::size_t> high, low;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      const double c = detections[i].confidence;
      if (c >= cfg_.high_conf_threshold) {
        high.push_back(i);
      } else if (c >= cfg_.low_conf_threshold) {
        low.push_back(i);
      }
    }

    std::vector<std::size_t> pool;
    for (std::size_t t = 0; t < active_.size(); ++t) pool.push_back(t);

    std::vector<char> track_matched(active_.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (active index, detection index)

    // Stage 1: every live track against confident detections, fused cost.
    {
      const CostMatrix cost = fuse_costs(iou_cost(pool, detections, high),
                                         appearance_cost(pool, detections, high), cfg_);
      std::vector<char> det_used(high.size(), 0);
      for (auto [r, c] : solve_assignment(cost)) {
        matches.emplace_back(pool[r], high[c]);
        track_matched[pool[r]] = 1;
        det_used[c] = 1;
      }
      std::vector<std::size_t> rest;
      for (std::size_t k = 0; k < high.size(); ++k) {
        if (!det_used[k]) rest.push_back(high[k]);
      }
      high.swap(rest);
    }

    // Stage 2: tracks still being followed (not Lost) against weak detections.
    {
      std::vector<std::size_t> pool2;
      for (std::size_t t : pool) {
        if (!track_matched[t] && active_[t].track.status != TrackStatus::Lost) pool2.push_back(t);
      }
      const CostMatrix cost = fuse_costs(iou_cost(pool2, detections, low), std::nullopt, cfg_);
      for (auto [r, c] : solve_assignment(cost)) {
        matches.emplace_back(pool2[r], low[c]);
        track_matched[pool2[r]] = 1;
      }
    }

    std::vector<TrackOutput> out;
    for (auto [t, d] : matches) {
      ActiveTrack& a = active_[t];
      const Detection& det = detections[d];
      a.state = filter_.update(a.state, det.box);
      if (det.embedding) {
        a.feature = a.feature ? blend(*a.feature, *det.embedding) : *det.embedding;
      }
      a.track.observe(det);
      a.misses = 0;
      ++a.hits;
      if (a.track.status == TrackStatus::Lost) {
        a.track.status = TrackStatus::Confirmed;
      } else if (a.track.status == TrackStatus::Tentative && a.hits >= cfg_.min_hits) {
        a.track.status = TrackStatus::Confirmed;
      }
      if (a.track.status == TrackStatus::Confirmed) out.push_back({a.track.track_id, det});
    }

    for (std::size_t t = 0; t < active_.size(); ++t) {
      if (track_matched[t]) continue;
      ActiveTrack& a = active_[t];
      a.hits = 0;
      ++a.misses;
      if (a.track.status == TrackStatus::Tentative) {
        a.track.status = TrackStatus::Removed;
      } else {
        a.track.status = TrackStatus::Lost;
        if (a.misses > cfg_.max_age) a.track.status = TrackStatus::Removed;
      }
    }

    for (std::size_t d : high) {
      ActiveTrack a;
      a.track.track_id = ++last_id_;
      a.track.observe(detections[d]);
      a.state = filter_.initiate(detections[d].box);
      a.feature = detections[d].embedding;
      a.hits = 1;
      a.track.status =
          (first_step || a.hits >= cfg_.min_hits) ? TrackStatus::Confirmed : TrackStatus::Tentative;
      if (a.track.status == TrackStatus::Confirmed) out.push_back({a.track.track_id, detections[d]});
      active_.push_back(std::move(a));
    }

    // Retire removed tracks, keeping creation order.
    std::vector<ActiveTrack> still;
    for (auto& a : active_) {
      if (a.track.status == TrackStatus::Removed) {
        finished_.push_back(std::move(a.track));
      } else {
        still.push_back(std::move(a));
      }
    }
    active_.swap(still);

    std::sort(out.begin(), out.end(),
              [](const TrackOutput& x, const TrackOutput& y) { return x.track_id < y.track_id; });
    return out;
  }

  /// Every track created so far: retired ones first, then live ones.
  std::vector<Track> tracks() const {
    std::vector<Track> all = finished_;
    for (const auto& a : active_) all.push_back(a.track);
    return all;
  }

  std::size_t live_count() const { return active_.size(); }

  /// Predicted (or last corrected) state of every live track by id.
  std::vector<std::pair<int, kalman::KalmanState>> live_states() const {
    std::vector<std::pair<int, kalman::KalmanState>> s;
    for (const auto& a : active_) s.emplace_back(a.track.track_id, a.state);
    return s;
  }

 private:
  struct ActiveTrack {
    Track track;
    kalman::KalmanState state;
    std::optional<std::vector<float>> feature;
    int hits = 0;
    int misses = 0;
  };

  static constexpr double kMinSize = 1e-3;

  void predict_all(const std::optional<kalman::AffineMotion>& motion) {
    std::vector<kalman::KalmanState> states;
    states.reserve(active_.size());
    for (auto& a : active_) {
      if (a.track.status == TrackStatus::Lost) {
        a.state.mean(6) = 0.0;
        a.state.mean(7) = 0.0;
      }
      states.push_back(filter_.predict(a.state));
    }
    if (motion) states = kalman::apply_camera_motion(std::move(states), *motion);
    for (std::size_t i = 0; i < active_.size(); ++i) {
      auto& m = states[i].mean;
      m(2) = std::max(m(2), kMinSize);
      m(3) = std::max(m(3), kMinSize);
      active_[i].state = states[i];
    }
  }

  CostMatrix iou_cost(const std::vector<std::size_t>& tracks, const std::vector<Detection>& dets,
                      const std::vector<std::size_t>& idx) const {
    CostMatrix c(static_cast<Eigen::Index>(tracks.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      const BoundingBox pred = active_[tracks[r]].state.box();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = 1.0 - iou(pred, dets[idx[k]].box);
      }
    }
    return c;
  }

  std::optional<CostMatrix> appearance_cost(const std::vector<std::size_t>& tracks,
                                            const std::vector<Detection>& dets,
                                            const std::vector<std::size_t>& idx) const {
    CostMatrix c(static_cast<Eigen::Index>(tracks.size()), static_cast<Eigen::Index>(idx.size()));
    bool any = false;
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      const auto& feat = active_[tracks[r]].feature;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& emb = dets[idx[k]].embedding;
        double v = std::numeric_limits<double>::quiet_NaN();
        if (feat && emb) {
          v = appearance_distance(*feat, *emb);
          any = true;
        }
        c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
      }
    }
    if (!any) return std::nullopt;
    return c;
  }

  std::vector<float> blend(const std::vector<float>& old, const std::vector<float>& fresh) const {
    if (old.size() != fresh.size()) throw Error(ErrorCode::ShapeMismatch, "embedding dimensions differ");
    std::vector<float> v(old.size());
    const double m = cfg_.feature_momentum;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<float>(m * old[i] + (1.0 - m) * fresh[i]);
    }
    return normalized(std::move(v));
  }

  TrackerConfig cfg_;
  kalman::BoxFilter filter_;
  std::vector<ActiveTrack> active_;
  std::vector<Track> finished_;
  std::optional<std::int64_t> last_frame_;
  int last_id_ = 0;
};

}  // namespace tap
