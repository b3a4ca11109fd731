#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tap/assignment.hpp"
#include "tap/error.hpp"
#include "tap/geometry.hpp"

namespace tap::metrics {

struct Annotation {
  int id = 0;
  BoundingBox box;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Ground truth or tracker output for one sequence. frames[t] holds the
/// boxes present at frame t.
struct AnnotatedSequence {
  std::string sequence_id;
  std::vector<std::vector<Annotation>> frames;

  std::size_t box_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.size();
    return n;
  }

  void validate() const {
    for (std::size_t t = 0; t < frames.size(); ++t) {
      std::set<int> seen;
      for (const auto& a : frames[t]) {
        if (a.id <= 0) throw Error(ErrorCode::InvalidArgument, "identity ids must be positive");
        if (!seen.insert(a.id).second) {
          throw Error(ErrorCode::InvalidArgument, "identity " + std::to_string(a.id) +
                                                      " appears twice in frame " + std::to_string(t));
        }
      }
    }
  }
};

struct MetricReport {
  std::string sequence_id;
  double hota = 0, deta = 0, assa = 0;
  double mota = 0;
  double idf1 = 0, idp = 0, idr = 0;
  double recall = 0, precision = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, idsw = 0;
  std::uint64_t gt_count = 0, pred_count = 0;
};

inline constexpr double kDefaultIouThreshold = 0.5;

namespace detail {

inline void check_ranges(const AnnotatedSequence& gt, const AnnotatedSequence& pred) {
  if (gt.frames.size() != pred.frames.size()) {
    throw Error(ErrorCode::FrameRangeMismatch,
                "ground truth has " + std::to_string(gt.frames.size()) + " frames, prediction has " +
                    std::to_string(pred.frames.size()));
  }
  gt.validate();
  pred.validate();
}

// Rate with an empty denominator: 1 when neither side has any box, else 0.
inline double ratio(double num, double den, bool both_empty) {
  if (den > 0.0) return num / den;
  return both_empty ? 1.0 : 0.0;
}

inline CostMatrix iou_matrix(const std::vector<Annotation>& gt, const std::vector<Annotation>& pred) {
  CostMatrix m(static_cast<Eigen::Index>(gt.size()), static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = 0; j < pred.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iou(gt[i].box, pred[j].box);
    }
  }
  return m;
}

}  // namespace detail

/// Matches gt rows to pred columns: the most pairs with IoU >= threshold,
/// then the largest IoU sum among those.
inline Matching match_frame(const CostMatrix& ious, double threshold) {
  CostMatrix cost(ious.rows(), ious.cols());
  for (Eigen::Index i = 0; i < ious.rows(); ++i) {
    for (Eigen::Index j = 0; j < ious.cols(); ++j) {
      cost(i, j) = ious(i, j) >= threshold ? 1.0 - ious(i, j) : kInfeasible;
    }
  }
  return solve_assignment(cost);
}

struct ClearResult {
  double mota = 0, recall = 0, precision = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, idsw = 0, gt_count = 0, pred_count = 0;
};

/// CLEAR MOT tallies. A gt/pred pair matched in the previous frame stays
/// matched while its IoU clears the threshold; the rest are matched per
/// frame. An ID switch is counted when a gt identity is matched to a
/// different prediction id than at its last match.
inline ClearResult clear_metrics(const AnnotatedSequence& gt, const AnnotatedSequence& pred,
                                 double iou_threshold = kDefaultIouThreshold) {
  detail::check_ranges(gt, pred);
  ClearResult r;
  std::map<int, int> previous_frame;  // gt id -> pred id matched at t-1
  std::map<int, int> last_match;      // gt id -> pred id at its latest match
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    const auto& g = gt.frames[t];
    const auto& p = pred.frames[t];
    const CostMatrix ious = detail::iou_matrix(g, p);

    std::vector<char> g_used(g.size(), 0), p_used(p.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto it = previous_frame.find(g[i].id);
      if (it == previous_frame.end()) continue;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j].id == it->second && !p_used[j] &&
            ious(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= iou_threshold) {
          g_used[i] = p_used[j] = 1;
          matches.emplace_back(i, j);
          break;
        }
      }
    }

    std::vector<std::size_t> gi, pj;
    for (std::size_t i = 0; i < g.size(); ++i) if (!g_used[i]) gi.push_back(i);
    for (std::size_t j = 0; j < p.size(); ++j) if (!p_used[j]) pj.push_back(j);
    CostMatrix sub(static_cast<Eigen::Index>(gi.size()), static_cast<Eigen::Index>(pj.size()));
    for (std::size_t a = 0; a < gi.size(); ++a) {
      for (std::size_t b = 0; b < pj.size(); ++b) {
        sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            ious(static_cast<Eigen::Index>(gi[a]), static_cast<Eigen::Index>(pj[b]));
      }
    }
    for (auto [a, b] : match_frame(sub, iou_threshold)) matches.emplace_back(gi[a], pj[b]);

    previous_frame.clear();
    for (auto [i, j] : matches) {
      const int gid = g[i].id, pid = p[j].id;
      auto it = last_match.find(gid);
      if (it != last_match.end() && it->second != pid) ++r.idsw;
      last_match[gid] = pid;
      previous_frame[gid] = pid;
    }
    r.tp += matches.size();
    r.fn += g.size() - matches.size();
    r.fp += p.size() - matches.size();
    r.gt_count += g.size();
    r.pred_count += p.size();
  }
  const bool both_empty = r.gt_count == 0 && r.pred_count == 0;
  r.mota = 1.0 - static_cast<double>(r.fn + r.fp + r.idsw) /
                     static_cast<double>(std::max<std::uint64_t>(1, r.gt_count));
  r.recall = detail::ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fn), both_empty);
  r.precision = detail::ratio(static_cast<double>(r.tp), static_cast<double>(r.tp + r.fp), both_empty);
  return r;
}

struct IdentityResult {
  double idf1 = 0, idp = 0, idr = 0;
  std::uint64_t idtp = 0;
};

/// Per identity pair, the number of frames where both are present with
/// IoU >= threshold. Rows follow sorted gt ids, columns sorted pred ids.
struct IdentityOverlap {
  std::vector<int> gt_ids, pred_ids;
  std::vector<std::vector<std::uint64_t>> idtp;
  std::uint64_t gt_boxes = 0, pred_boxes = 0;
};

inline IdentityOverlap identity_overlap(const AnnotatedSequence& gt, const AnnotatedSequence& pred,
                                        double iou_threshold) {
  detail::check_ranges(gt, pred);
  IdentityOverlap o;
  std::set<int> gs, ps;
  for (const auto& f : gt.frames) for (const auto& a : f) gs.insert(a.id);
  for (const auto& f : pred.frames) for (const auto& a : f) ps.insert(a.id);
  o.gt_ids.assign(gs.begin(), gs.end());
  o.pred_ids.assign(ps.begin(), ps.end());
  std::map<int, std::size_t> gidx, pidx;
  for (std::size_t i = 0; i < o.gt_ids.size(); ++i) gidx[o.gt_ids[i]] = i;
  for (std::size_t j = 0; j < o.pred_ids.size(); ++j) pidx[o.pred_ids[j]] = j;
  o.idtp.assign(o.gt_ids.size(), std::vector<std::uint64_t>(o.pred_ids.size(), 0));
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    for (const auto& g : gt.frames[t]) {
      for (const auto& p : pred.frames[t]) {
        if (iou(g.box, p.box) >= iou_threshold) ++o.idtp[gidx[g.id]][pidx[p.id]];
      }
    }
  }
  o.gt_boxes = gt.box_count();
  o.pred_boxes = pred.box_count();
  return o;
}

/// IDF1 / IDP / IDR from the one-to-one trajectory matching that maximizes
/// the total number of identity-consistent matched frames.
inline IdentityResult identity_metrics(const AnnotatedSequence& gt, const AnnotatedSequence& pred,
                                       double iou_threshold = kDefaultIouThreshold) {
  const IdentityOverlap o = identity_overlap(gt, pred, iou_threshold);
  CostMatrix cost(static_cast<Eigen::Index>(o.gt_ids.size()),
                  static_cast<Eigen::Index>(o.pred_ids.size()));
  for (std::size_t i = 0; i < o.gt_ids.size(); ++i) {
    for (std::size_t j = 0; j < o.pred_ids.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          -static_cast<double>(o.idtp[i][j]);
    }
  }
  IdentityResult r;
  for (auto [i, j] : solve_assignment(cost)) r.idtp += o.idtp[i][j];
  const bool both_empty = o.gt_boxes == 0 && o.pred_boxes == 0;
  const double idtp = static_cast<double>(r.idtp);
  r.idp = detail::ratio(idtp, static_cast<double>(o.pred_boxes), both_empty);
  r.idr = detail::ratio(idtp, static_cast<double>(o.gt_boxes), both_empty);
  r.idf1 = detail::ratio(2.0 * idtp, static_cast<double>(o.gt_boxes + o.pred_boxes), both_empty);
  return r;
}

inline constexpr int kHotaLevels = 19;

/// alpha_k = (k + 1) / 20 for k = 0..18.
inline double hota_alpha(int k) { return static_cast<double>(k + 1) / 20.0; }

struct HotaResult {
  double hota = 0, deta = 0, assa = 0;
  std::array<double, kHotaLevels> hota_per_alpha{}, deta_per_alpha{}, assa_per_alpha{};
};

/// HOTA averaged over the 19 localization thresholds, with its detection
/// (DetA) and association (AssA) parts.
inline HotaResult hota(const AnnotatedSequence& gt, const AnnotatedSequence& pred) {
  detail::check_ranges(gt, pred);
  std::map<int, std::uint64_t> gt_len, pred_len;
  for (const auto& f : gt.frames) for (const auto& a : f) ++gt_len[a.id];
  for (const auto& f : pred.frames) for (const auto& a : f) ++pred_len[a.id];
  const std::uint64_t n_gt = gt.box_count(), n_pred = pred.box_count();
  const bool both_empty = n_gt == 0 && n_pred == 0;

  std::vector<CostMatrix> ious;
  ious.reserve(gt.frames.size());
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    ious.push_back(detail::iou_matrix(gt.frames[t], pred.frames[t]));
  }

  HotaResult r;
  for (int k = 0; k < kHotaLevels; ++k) {
    const double alpha = hota_alpha(k);
    std::map<std::pair<int, int>, std::uint64_t> tpa;
    std::uint64_t tp = 0;
    for (std::size_t t = 0; t < gt.frames.size(); ++t) {
      for (auto [i, j] : match_frame(ious[t], alpha)) {
        ++tpa[{gt.frames[t][i].id, pred.frames[t][j].id}];
        ++tp;
      }
    }
    const std::uint64_t fn = n_gt - tp, fp = n_pred - tp;
    double assoc_sum = 0.0;
    for (const auto& [pair, count] : tpa) {
      const double c = static_cast<double>(count);
      const double denom = static_cast<double>(gt_len[pair.first] + pred_len[pair.second]) - c;
      assoc_sum += c * (c / denom);
    }
    const double det_denom = static_cast<double>(tp + fn + fp);
    r.deta_per_alpha[k] = detail::ratio(static_cast<double>(tp), det_denom, both_empty);
    r.assa_per_alpha[k] = detail::ratio(assoc_sum, static_cast<double>(tp), both_empty);
    r.hota_per_alpha[k] = std::sqrt(detail::ratio(assoc_sum, det_denom, both_empty));
  }
  for (int k = 0; k < kHotaLevels; ++k) {
    r.hota += r.hota_per_alpha[k];
    r.deta += r.deta_per_alpha[k];
    r.assa += r.assa_per_alpha[k];
  }
  r.hota /= kHotaLevels;
  r.deta /= kHotaLevels;
  r.assa /= kHotaLevels;
  return r;
}

inline MetricReport evaluate(const AnnotatedSequence& gt, const AnnotatedSequence& pred,
                             double iou_threshold = kDefaultIouThreshold) {
  const ClearResult c = clear_metrics(gt, pred, iou_threshold);
  const IdentityResult id = identity_metrics(gt, pred, iou_threshold);
  const HotaResult h = hota(gt, pred);
  MetricReport r;
  r.sequence_id = gt.sequence_id;
  r.hota = h.hota;
  r.deta = h.deta;
  r.assa = h.assa;
  r.mota = c.mota;
  r.idf1 = id.idf1;
  r.idp = id.idp;
  r.idr = id.idr;
  r.recall = c.recall;
  r.precision = c.precision;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.idsw = c.idsw;
  r.gt_count = c.gt_count;
  r.pred_count = c.pred_count;
  return r;
}

/// Unweighted mean of every rate; counts are summed.
inline MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no reports to average");
  if (reports.size() == 1) return reports.front();
  MetricReport avg;
  avg.sequence_id = "avg";
  for (const auto& r : reports) {
    avg.hota += r.hota;
    avg.deta += r.deta;
    avg.assa += r.assa;
    avg.mota += r.mota;
    avg.idf1 += r.idf1;
    avg.idp += r.idp;
    avg.idr += r.idr;
    avg.recall += r.recall;
    avg.precision += r.precision;
    avg.tp += r.tp;
    avg.fp += r.fp;
    avg.fn += r.fn;
    avg.idsw += r.idsw;
    avg.gt_count += r.gt_count;
    avg.pred_count += r.pred_count;
  }
  const double n = static_cast<double>(reports.size());
  for (double* f : {&avg.hota, &avg.deta, &avg.assa, &avg.mota, &avg.idf1, &avg.idp, &avg.idr,
                    &avg.recall, &avg.precision}) {
    *f /= n;
  }
  return avg;
}

}  // namespace tap::metrics
