#pragma once

// Equirectangular projection, rigid poses and SO(3) helpers.
//
// Camera convention used throughout the library: the camera looks along +X
// at the image center, +Z is up. Azimuth atan2(y, x) increases to the right
// (u), elevation decreases downwards (v). Pixel centers sit at integer
// coordinates and images are always W = 2H.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/random.hpp"

namespace cpo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Continuous pixel location. u is kept in [0, W); v is left unclamped so
// callers can tell when a direction falls off the pole rows.
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

// Rigid transform mapping cloud coordinates into the camera frame:
// p_cam = rotation * x + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  // Camera placed at `center` with world-to-camera rotation `rotation`.
  static Pose from_center(const Mat3& rotation, const Vec3& center) {
    return {rotation, -rotation * center};
  }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  // (this * other)(x) == this(other(x))
  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Pose inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  // Camera position in cloud coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }

  bool operator==(const Pose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

inline std::vector<Vec3> apply_pose(const Pose& pose, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(pose.apply(p));
  return out;
}

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

// Rodrigues formula with a Taylor fallback near zero.
inline Mat3 exp_so3(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 k = hat(omega);
  double a;
  double b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

inline Mat3 rotation_z(double angle) { return exp_so3(Vec3(0.0, 0.0, angle)); }

// Geodesic distance on SO(3), in radians. Uses atan2 on the skew and trace
// parts of Ra * Rb^T so small angles keep full precision.
inline double rotation_error(const Mat3& ra, const Mat3& rb) {
  const Mat3 r = ra * rb.transpose();
  const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = 0.5 * skew.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

inline double wrap_u(double u, int width) {
  const double w = static_cast<double>(width);
  u = std::fmod(u, w);
  if (u < 0.0) u += w;
  if (u >= w) u -= w;
  return u;
}

inline PixelCoord project(const Vec3& p, int height, int width) {
  const double r = p.norm();
  if (r < 1e-12) throw DegeneratePoint();
  const double theta = std::atan2(p.y(), p.x());
  const double phi = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  PixelCoord out;
  out.u = wrap_u((theta / kTwoPi + 0.5) * width - 0.5, width);
  out.v = (0.5 - phi / kPi) * height - 0.5;
  return out;
}

inline Vec3 unproject(const PixelCoord& px, int height, int width) {
  const double theta = ((px.u + 0.5) / width - 0.5) * kTwoPi;
  const double phi = (0.5 - (px.v + 0.5) / height) * kPi;
  const double c = std::cos(phi);
  return {c * std::cos(theta), c * std::sin(theta), std::sin(phi)};
}

// Projection together with d(u, v)/d(p). Returns false for the camera center
// and for points on the polar axis where the azimuth has no derivative.
inline bool project_with_jacobian(const Vec3& p, int height, int width, PixelCoord& out,
                                  Eigen::Matrix<double, 2, 3>& jac) {
  const double rho2 = p.x() * p.x() + p.y() * p.y();
  const double r2 = rho2 + p.z() * p.z();
  if (r2 < 1e-24 || rho2 < 1e-24) return false;
  const double rho = std::sqrt(rho2);
  const double r = std::sqrt(r2);
  const double theta = std::atan2(p.y(), p.x());
  const double phi = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  out.u = wrap_u((theta / kTwoPi + 0.5) * width - 0.5, width);
  out.v = (0.5 - phi / kPi) * height - 0.5;

  const double su = width / kTwoPi;
  jac(0, 0) = -su * p.y() / rho2;
  jac(0, 1) = su * p.x() / rho2;
  jac(0, 2) = 0.0;
  // dphi/dp = (e_z - z p / r^2) / rho
  const double sv = -static_cast<double>(height) / kPi / rho;
  const double zr = p.z() / r2;
  jac(1, 0) = sv * (-zr * p.x());
  jac(1, 1) = sv * (-zr * p.y());
  jac(1, 2) = sv * (1.0 - zr * p.z());
  return true;
}

// Uniform (Haar) rotations from uniformly sampled unit quaternions.
inline std::vector<Mat3> sample_rotations(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Mat3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    Eigen::Quaterniond q(b * std::cos(kTwoPi * u3), a * std::sin(kTwoPi * u2),
                         a * std::cos(kTwoPi * u2), b * std::sin(kTwoPi * u3));
    q.normalize();
    out.push_back(q.toRotationMatrix());
  }
  return out;
}

inline double rad_to_deg(double r) { return r * 180.0 / kPi; }
inline double deg_to_rad(double d) { return d * kPi / 180.0; }

}  // namespace cpo
