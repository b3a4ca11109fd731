#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "tap/error.hpp"
#include "tap/geometry.hpp"

namespace tap::kalman {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

/// Measurement-update for any linear-Gaussian model. The posterior is
/// P - W^T W with W = chol(S)^-1 H P, so measured variances never grow.
template <int N, int M>
void correct(Vec<N>& mean, Mat<N, N>& cov, const Mat<M, N>& H, const Mat<M, M>& R,
             const Vec<M>& z) {
  const Mat<M, N> hp = H * cov;
  Mat<M, M> s = hp * H.transpose() + R;
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LLT<Mat<M, M>> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularInnovation, "innovation covariance is not positive definite");
  }
  const auto& L = llt.matrixL();
  for (int i = 0; i < s.rows(); ++i) {
    if (!(L(i, i) > 1e-300)) {
      throw Error(ErrorCode::SingularInnovation, "innovation covariance is singular");
    }
  }
  const Mat<M, N> w = llt.matrixL().solve(hp);
  const Vec<M> innovation = llt.matrixL().solve((z - H * mean).eval());
  mean += w.transpose() * innovation;
  cov -= w.transpose() * w;
  cov = 0.5 * (cov + cov.transpose()).eval();
}

/// Constant-velocity state over (cx, cy, w, h) and their per-frame rates.
struct KalmanState {
  Vec<8> mean = Vec<8>::Zero();
  Mat<8, 8> covariance = Mat<8, 8>::Zero();

  BoundingBox box() const { return BoundingBox::from_center(mean(0), mean(1), mean(2), mean(3)); }
};

struct NoiseConfig {
  double process_noise = 1.0;
  double measurement_noise = 1.0;
  double position_weight = 1.0 / 20.0;
  double velocity_weight = 1.0 / 160.0;
};

class BoxFilter {
 public:
  explicit BoxFilter(NoiseConfig noise = {}) : noise_(noise) {
    transition_.setIdentity();
    for (int i = 0; i < 4; ++i) transition_(i, i + 4) = 1.0;
    observation_.setZero();
    for (int i = 0; i < 4; ++i) observation_(i, i) = 1.0;
  }

  const NoiseConfig& noise() const { return noise_; }

  KalmanState initiate(const BoundingBox& box) const {
    KalmanState s;
    s.mean << box.center_x(), box.center_y(), box.width(), box.height(), 0, 0, 0, 0;
    const double h = box.height();
    const double p = 2.0 * noise_.position_weight * h;
    const double v = 10.0 * noise_.velocity_weight * h;
    Vec<8> std;
    std << p, p, p, p, v, v, v, v;
    s.covariance = std.cwiseProduct(std).asDiagonal();
    return s;
  }

  KalmanState predict(const KalmanState& s) const {
    const double h = s.mean(3);
    const double p = noise_.process_noise * noise_.position_weight * h;
    const double v = noise_.process_noise * noise_.velocity_weight * h;
    Vec<8> std;
    std << p, p, p, p, v, v, v, v;
    KalmanState out;
    out.mean = transition_ * s.mean;
    out.covariance = transition_ * s.covariance * transition_.transpose();
    out.covariance += Mat<8, 8>(std.cwiseProduct(std).asDiagonal());
    return out;
  }

  KalmanState update(const KalmanState& s, const BoundingBox& measurement) const {
    if (!(measurement.width() > 0.0 && measurement.height() > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "measurement box has no area");
    }
    const double m = noise_.measurement_noise * noise_.position_weight * s.mean(3);
    Mat<4, 4> r = Mat<4, 4>::Zero();
    for (int i = 0; i < 4; ++i) r(i, i) = m * m;
    Vec<4> z;
    z << measurement.center_x(), measurement.center_y(), measurement.width(), measurement.height();
    KalmanState out = s;
    correct<8, 4>(out.mean, out.covariance, observation_, r, z);
    return out;
  }

 private:
  NoiseConfig noise_;
  Mat<8, 8> transition_;
  Mat<4, 8> observation_;
};

/// Maps previous-frame pixel coordinates to current-frame coordinates:
/// [x', y']^T = A [x, y]^T + t with the 2x3 matrix [A | t].
struct AffineMotion {
  Mat<2, 3> matrix = (Mat<2, 3>() << 1, 0, 0, 0, 1, 0).finished();

  static AffineMotion translation(double tx, double ty) {
    AffineMotion m;
    m.matrix(0, 2) = tx;
    m.matrix(1, 2) = ty;
    return m;
  }

  Mat<2, 2> linear() const { return matrix.leftCols<2>(); }
  Vec<2> offset() const { return matrix.col(2); }

  /// this ∘ first: apply `first`, then this.
  AffineMotion after(const AffineMotion& first) const {
    AffineMotion c;
    c.matrix.leftCols<2>() = linear() * first.linear();
    c.matrix.col(2) = linear() * first.offset() + offset();
    return c;
  }
};

inline void validate(const AffineMotion& motion) {
  if (!motion.matrix.allFinite()) {
    throw Error(ErrorCode::NonInvertibleMotion, "motion matrix has non-finite entries");
  }
  if (std::abs(motion.linear().determinant()) < 1e-12) {
    throw Error(ErrorCode::NonInvertibleMotion, "motion linear part is singular");
  }
}

/// Warps predicted states into the current frame. Centres and velocities go
/// through the linear part (centres also get the offset); sizes scale by
/// sqrt|det A|, the geometric mean of its singular values.
inline std::vector<KalmanState> apply_camera_motion(std::vector<KalmanState> states,
                                                    const AffineMotion& motion) {
  validate(motion);
  const Mat<2, 2> a = motion.linear();
  const double scale = std::sqrt(std::abs(a.determinant()));
  Mat<8, 8> t = Mat<8, 8>::Zero();
  t.block<2, 2>(0, 0) = a;
  t(2, 2) = scale;
  t(3, 3) = scale;
  t.block<2, 2>(4, 4) = a;
  t(6, 6) = scale;
  t(7, 7) = scale;
  for (auto& s : states) {
    Vec<8> mean = t * s.mean;
    mean.head<2>() += motion.offset();
    s.mean = mean;
    s.covariance = t * s.covariance * t.transpose();
  }
  return states;
}

}  // namespace tap::kalman
