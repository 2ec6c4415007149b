#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cpo/geometry.hpp"
#include "cpo/random.hpp"

using namespace cpo;

namespace {

Vec3 random_direction(Rng& rng) {
  while (true) {
    const Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

double wrapped_du(double a, double b, int width) {
  double d = std::abs(a - b);
  return std::min(d, width - d);
}

}  // namespace

TEST(Projection, ForwardAxisLandsOnImageCenter) {
  const PixelCoord px = project(Vec3(1, 0, 0), 512, 1024);
  EXPECT_DOUBLE_EQ(px.u, 511.5);
  EXPECT_DOUBLE_EQ(px.v, 255.5);
}

TEST(Projection, LeftAndUpDirections) {
  // +Y is 90 degrees of azimuth to the right of +X; +Z is the top row edge.
  const PixelCoord y = project(Vec3(0, 1, 0), 512, 1024);
  EXPECT_NEAR(y.u, 767.5, 1e-9);
  EXPECT_NEAR(y.v, 255.5, 1e-9);
  const PixelCoord z = project(Vec3(0, 0, 1), 512, 1024);
  EXPECT_NEAR(z.v, -0.5, 1e-9);
}

TEST(Projection, ScaleInvariant) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Vec3 d = random_direction(rng);
    const PixelCoord a = project(d, 256, 512);
    const PixelCoord b = project(7.5 * d, 256, 512);
    EXPECT_NEAR(wrapped_du(a.u, b.u, 512), 0.0, 1e-9);
    EXPECT_NEAR(a.v, b.v, 1e-9);
  }
}

TEST(Projection, CameraCenterIsDegenerate) {
  EXPECT_THROW(project(Vec3::Zero(), 512, 1024), DegeneratePoint);
}

TEST(Projection, RoundTripPixelToRayToPixel) {
  Rng rng(2);
  const int h = 512, w = 1024;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const PixelCoord px{rng.uniform(0, w), rng.uniform(0, h - 1)};
    const PixelCoord back = project(unproject(px, h, w) * rng.uniform(0.5, 20.0), h, w);
    worst = std::max({worst, wrapped_du(px.u, back.u, w), std::abs(px.v - back.v)});
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Projection, RoundTripPointToPixelToRay) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 d = random_direction(rng);
    const Vec3 back = unproject(project(d, 512, 1024), 512, 1024);
    ASSERT_LT((back - d).norm(), 1e-9);
  }
}

TEST(Projection, YawMovesAzimuthOnly) {
  Rng rng(4);
  const int h = 512, w = 1024;
  for (int k : {1, 7, 64, 500, 1023}) {
    const Mat3 rz = rotation_z(k * kTwoPi / w);
    for (int i = 0; i < 50; ++i) {
      const Vec3 d = random_direction(rng);
      const PixelCoord a = project(d, h, w);
      const PixelCoord b = project(rz * d, h, w);
      EXPECT_NEAR(wrapped_du(wrap_u(a.u + k, w), b.u, w), 0.0, 1e-7);
      EXPECT_NEAR(a.v, b.v, 1e-9);
    }
  }
}

TEST(Projection, JacobianMatchesFiniteDifferences) {
  Rng rng(5);
  const int h = 512, w = 1024;
  for (int i = 0; i < 200; ++i) {
    Vec3 p = random_direction(rng) * rng.uniform(0.5, 5.0);
    if (std::abs(p.z()) > 0.95 * p.norm()) continue;
    // Stay away from the seam so wrapping does not enter the difference.
    if (std::abs(std::atan2(p.y(), p.x())) > 3.0) continue;
    PixelCoord px;
    Eigen::Matrix<double, 2, 3> jac;
    ASSERT_TRUE(project_with_jacobian(p, h, w, px, jac));
    const PixelCoord ref = project(p, h, w);
    EXPECT_DOUBLE_EQ(px.u, ref.u);
    EXPECT_DOUBLE_EQ(px.v, ref.v);
    for (int k = 0; k < 3; ++k) {
      const double eps = 1e-6;
      Vec3 hi = p, lo = p;
      hi[k] += eps;
      lo[k] -= eps;
      const PixelCoord a = project(hi, h, w), b = project(lo, h, w);
      EXPECT_NEAR(jac(0, k), (a.u - b.u) / (2 * eps), 1e-4 * (1 + std::abs(jac(0, k))));
      EXPECT_NEAR(jac(1, k), (a.v - b.v) / (2 * eps), 1e-4 * (1 + std::abs(jac(1, k))));
    }
  }
}

TEST(Projection, JacobianRejectsPolarAxis) {
  PixelCoord px;
  Eigen::Matrix<double, 2, 3> jac;
  EXPECT_FALSE(project_with_jacobian(Vec3(0, 0, 2), 512, 1024, px, jac));
  EXPECT_FALSE(project_with_jacobian(Vec3::Zero(), 512, 1024, px, jac));
}

TEST(PoseAlgebra, CompositionAndInverse) {
  Rng rng(6);
  const auto rs = sample_rotations(2, 6);
  const Pose a{rs[0], Vec3(0.1, -2, 3)};
  const Pose b{rs[1], Vec3(1, 0.5, -0.25)};
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    EXPECT_LT(((a * b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
    EXPECT_LT((a.inverse().apply(a.apply(x)) - x).norm(), 1e-12);
  }
}

TEST(PoseAlgebra, FromCenterPlacesCameraAtCenter) {
  const Mat3 r = sample_rotations(1, 7)[0];
  const Vec3 c(1.5, 2.5, 1.2);
  const Pose p = Pose::from_center(r, c);
  EXPECT_LT((p.center() - c).norm(), 1e-12);
  EXPECT_LT(p.apply(c).norm(), 1e-12);
}

TEST(So3, ExpIsOrthonormalAndMatchesAngleAxis) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = random_direction(rng) * rng.uniform(0.0, 3.0);
    const Mat3 r = exp_so3(w);
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    const Mat3 ref = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_LT((r - ref).norm(), 1e-12);
  }
  EXPECT_LT((exp_so3(Vec3(1e-9, 0, 0)) - Mat3::Identity()).norm(), 2e-9);
}

TEST(So3, RotationErrorIsGeodesicAngle) {
  EXPECT_NEAR(rotation_error(rotation_z(0.3), Mat3::Identity()), 0.3, 1e-12);
  EXPECT_NEAR(rotation_error(exp_so3(Vec3(0, 1e-8, 0)), Mat3::Identity()), 1e-8, 1e-20);
  EXPECT_NEAR(rotation_error(exp_so3(Vec3(kPi, 0, 0)), Mat3::Identity()), kPi, 1e-9);
  const auto rs = sample_rotations(2, 9);
  EXPECT_NEAR(rotation_error(rs[0], rs[1]), rotation_error(rs[1], rs[0]), 1e-12);
  EXPECT_NEAR(rotation_error(rs[0], rs[0]), 0.0, 1e-12);
}

TEST(So3, SampledRotationsAreValidAndDeterministic) {
  const auto a = sample_rotations(500, 10);
  const auto b = sample_rotations(500, 10);
  ASSERT_EQ(a.size(), 500u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_LT((a[i] * a[i].transpose() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(a[i].determinant(), 1.0, 1e-12);
  }
  EXPECT_NE(sample_rotations(1, 11)[0], a[0]);
}

TEST(So3, SampledAnglesFollowHaarDensity) {
  // Haar measure on SO(3): rotation angle CDF F(t) = (t - sin t) / pi.
  const auto rs = sample_rotations(100000, 12);
  std::vector<double> angles;
  angles.reserve(rs.size());
  for (const auto& r : rs) angles.push_back(rotation_error(r, Mat3::Identity()));
  std::sort(angles.begin(), angles.end());
  const double n = static_cast<double>(angles.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double f = (angles[i] - std::sin(angles[i])) / kPi;
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  EXPECT_LT(ks, 0.01);
}

TEST(Random, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(0, 1), mix_seed(0, 2));
  EXPECT_NE(mix_seed(0, 1), mix_seed(1, 1));
  EXPECT_EQ(mix_seed(5, 3), mix_seed(5, 3));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
