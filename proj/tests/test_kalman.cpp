#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "tap/kalman.hpp"

using namespace tap;
using namespace tap::kalman;

namespace {

KalmanState random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  KalmanState s;
  s.mean << 100 + 50 * u(rng), 100 + 50 * u(rng), 30 + 10 * u(rng), 40 + 10 * u(rng), u(rng), u(rng), 0.1 * u(rng),
      0.1 * u(rng);
  Mat<8, 8> a;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) a(i, j) = u(rng);
  s.covariance = a * a.transpose() + 0.1 * Mat<8, 8>::Identity();
  return s;
}

}  // namespace

TEST(KalmanCorrect, ScalarHandCase) {
  Vec<1> mean = Vec<1>::Zero();
  Mat<1, 1> cov = Mat<1, 1>::Identity();
  correct<1, 1>(mean, cov, Mat<1, 1>::Identity(), Mat<1, 1>::Identity(), Vec<1>::Constant(1.0));
  EXPECT_NEAR(mean(0), 0.5, 1e-12);
  EXPECT_NEAR(cov(0, 0), 0.5, 1e-12);
}

TEST(KalmanCorrect, MatchesGainForm) {
  std::mt19937 rng(3);
  BoxFilter f;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_state(rng);
    const BoundingBox z = BoundingBox::from_center(s.mean(0) + 3, s.mean(1) - 2, s.mean(2) + 1, s.mean(3));
    const auto post = f.update(s, z);

    Mat<4, 8> H = Mat<4, 8>::Zero();
    for (int i = 0; i < 4; ++i) H(i, i) = 1;
    const double m = f.noise().measurement_noise * f.noise().position_weight * s.mean(3);
    const Mat<4, 4> R = (m * m) * Mat<4, 4>::Identity();
    const Mat<4, 4> S = H * s.covariance * H.transpose() + R;
    const Mat<8, 4> K = s.covariance * H.transpose() * S.inverse();
    Vec<4> zv;
    zv << z.center_x(), z.center_y(), z.width(), z.height();
    const Vec<8> mean = s.mean + K * (zv - H * s.mean);
    const Mat<8, 8> cov = (Mat<8, 8>::Identity() - K * H) * s.covariance;
    EXPECT_LT((post.mean - mean).norm(), 1e-8 * (1 + mean.norm()));
    EXPECT_LT((post.covariance - cov).norm(), 1e-8 * (1 + cov.norm()));
  }
}

TEST(KalmanUpdate, PosteriorVarianceNotLarger) {
  std::mt19937 rng(7);
  std::normal_distribution<double> n(0, 5);
  BoxFilter f;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_state(rng);
    const auto z = BoundingBox::from_center(s.mean(0) + n(rng), s.mean(1) + n(rng), s.mean(2) + std::abs(n(rng)),
                                            s.mean(3) + std::abs(n(rng)));
    const auto post = f.update(s, z);
    for (int i = 0; i < 4; ++i) EXPECT_LE(post.covariance(i, i), s.covariance(i, i));
    EXPECT_LT((post.covariance - post.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(KalmanUpdate, ZeroInnovationKeepsMean) {
  BoxFilter f;
  const auto s = f.predict(f.initiate({10, 20, 40, 80}));
  const auto post = f.update(s, s.box());
  EXPECT_LT((post.mean - s.mean).norm(), 1e-9);
}

TEST(KalmanUpdate, PreciseSensorLimit) {
  NoiseConfig cfg;
  cfg.measurement_noise = 1e-7;
  BoxFilter f(cfg);
  const auto s = f.predict(f.initiate({10, 20, 40, 80}));
  const BoundingBox z{14, 22, 46, 85};
  const auto post = f.update(s, z);
  EXPECT_NEAR(post.mean(0), z.center_x(), 1e-6);
  EXPECT_NEAR(post.mean(1), z.center_y(), 1e-6);
  EXPECT_NEAR(post.mean(2), z.width(), 1e-6);
  EXPECT_NEAR(post.mean(3), z.height(), 1e-6);
}

TEST(KalmanUpdate, SingularInnovation) {
  NoiseConfig cfg;
  cfg.measurement_noise = 0.0;
  BoxFilter f(cfg);
  KalmanState s;
  s.mean << 10, 10, 5, 5, 0, 0, 0, 0;
  try {
    f.update(s, BoundingBox::from_center(10, 10, 5, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularInnovation);
  }
}

TEST(KalmanUpdate, RepeatedUpdatesConverge) {
  BoxFilter f;
  auto s = f.initiate({0, 0, 20, 40});
  const BoundingBox z{10, 6, 32, 50};
  Vec<4> target;
  target << z.center_x(), z.center_y(), z.width(), z.height();
  double prev = (s.mean.head<4>() - target).norm();
  for (int k = 0; k < 20; ++k) {
    s = f.update(s, z);
    const double d = (s.mean.head<4>() - target).norm();
    EXPECT_LE(d, prev);
    prev = d;
  }
}

TEST(KalmanPredict, Examples) {
  BoxFilter f;
  KalmanState s = f.initiate({0, 0, 20, 20});
  s.mean(0) = 10;
  s.mean(1) = 10;
  auto still = f.predict(s);
  EXPECT_EQ(still.mean(0), 10);
  EXPECT_EQ(still.mean(1), 10);
  s.mean(4) = 2;
  const auto moved = f.predict(s);
  EXPECT_EQ(moved.mean(0), 12);
  EXPECT_EQ(moved.mean(1), 10);
}

TEST(KalmanPredict, TraceStrictlyIncreases) {
  std::mt19937 rng(9);
  BoxFilter f;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_state(rng);
    for (int k = 0; k < 5; ++k) {
      const auto next = f.predict(s);
      EXPECT_GT(next.covariance.trace(), s.covariance.trace());
      s = next;
    }
  }
}

TEST(CameraMotion, Identity) {
  std::mt19937 rng(1);
  const std::vector<KalmanState> states{random_state(rng), random_state(rng)};
  const auto out = apply_camera_motion(states, AffineMotion{});
  for (std::size_t i = 0; i < states.size(); ++i) {
    EXPECT_EQ(out[i].mean, states[i].mean);
    EXPECT_EQ(out[i].covariance, states[i].covariance);
  }
}

TEST(CameraMotion, Translation) {
  std::mt19937 rng(2);
  const auto s = random_state(rng);
  const auto out = apply_camera_motion({s}, AffineMotion::translation(5, 0))[0];
  EXPECT_DOUBLE_EQ(out.mean(0), s.mean(0) + 5);
  EXPECT_EQ(out.mean(1), s.mean(1));
  EXPECT_EQ(out.mean.tail<6>(), s.mean.tail<6>());
  EXPECT_EQ(out.covariance, s.covariance);
}

TEST(CameraMotion, CompositionOfPositions) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    AffineMotion m1, m2;
    m1.matrix << 1 + 0.1 * u(rng), 0.1 * u(rng), 5 * u(rng), 0.1 * u(rng), 1 + 0.1 * u(rng), 5 * u(rng);
    m2.matrix << 1 + 0.1 * u(rng), 0.1 * u(rng), 5 * u(rng), 0.1 * u(rng), 1 + 0.1 * u(rng), 5 * u(rng);
    const auto s = random_state(rng);
    const auto seq = apply_camera_motion(apply_camera_motion({s}, m1), m2)[0];
    const auto once = apply_camera_motion({s}, m2.after(m1))[0];
    EXPECT_NEAR(seq.mean(0), once.mean(0), 1e-9);
    EXPECT_NEAR(seq.mean(1), once.mean(1), 1e-9);
    EXPECT_NEAR(seq.mean(2), once.mean(2), 1e-9);
  }
}

TEST(CameraMotion, ScaleAppliesToSize) {
  AffineMotion m;
  m.matrix << 2, 0, 0, 0, 2, 0;
  KalmanState s;
  s.mean << 10, 10, 4, 6, 1, 0, 0, 0;
  const auto out = apply_camera_motion({s}, m)[0];
  EXPECT_DOUBLE_EQ(out.mean(0), 20);
  EXPECT_DOUBLE_EQ(out.mean(2), 8);
  EXPECT_DOUBLE_EQ(out.mean(3), 12);
  EXPECT_DOUBLE_EQ(out.mean(4), 2);
}

TEST(CameraMotion, NonInvertible) {
  AffineMotion m;
  m.matrix << 1, 2, 0, 2, 4, 0;
  try {
    apply_camera_motion({}, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonInvertibleMotion);
  }
}
