#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cpo/geometry.hpp"
#include "cpo/random.hpp"
#include "cpo/refine.hpp"
#include "cpo/scene.hpp"

namespace cpo::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cpo_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Vec3 random_direction(Rng& rng) {
  while (true) {
    const Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

// Moves the camera center by `meters` and turns it by `degrees`, both about random axes.
inline Pose perturb(const Pose& gt, double meters, double degrees, Rng& rng) {
  const Mat3 r = exp_so3(deg_to_rad(degrees) * random_direction(rng)) * gt.rotation;
  return Pose::from_center(r, gt.center() + meters * random_direction(rng));
}

inline double t_err(const Pose& a, const Pose& b) { return (a.center() - b.center()).norm(); }
inline double r_err(const Pose& a, const Pose& b) { return rad_to_deg(rotation_error(a.rotation, b.rotation)); }

// Lower middle for even sizes.
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

// Points whose bilinear cell stays fixed under every +-h coordinate step,
// away from the poles; on that set the loss is smooth around `pose`.
inline std::vector<std::uint32_t> cell_stable_subset(const Pose& pose, const PointCloud& cloud, int height,
                                                     std::span<const std::uint32_t> candidates, double h) {
  const int w = 2 * height;
  std::vector<std::uint32_t> out;
  std::vector<Pose> probes;
  for (int k = 0; k < 6; ++k)
    for (double s : {-h, h}) {
      Vec6 d = Vec6::Zero();
      d[k] = s;
      probes.push_back(retract(pose, d));
    }
  for (const auto i : candidates) {
    const Vec3 p = pose.apply(cloud.positions[i]);
    if (p.norm() < 1e-6) continue;
    const PixelCoord c = project(p, height, w);
    if (c.v < 2.0 || c.v > height - 3.0) continue;
    bool stable = true;
    for (const Pose& q : probes) {
      const PixelCoord e = project(q.apply(cloud.positions[i]), height, w);
      if (std::floor(e.u) != std::floor(c.u) || std::floor(e.v) != std::floor(c.v)) {
        stable = false;
        break;
      }
    }
    if (stable) out.push_back(i);
  }
  return out;
}

inline SceneSpec unchanged_spec(int queries) {
  SceneSpec spec;
  spec.query_count = queries;
  return spec;
}

inline SceneSpec changed_spec(int queries) {
  SceneSpec spec;
  spec.query_count = queries;
  spec.changes.push_back(change::RecolorFraction{0.3});
  spec.changes.push_back(change::ColorShift{Vec3(0.8, 0.9, 1.1), Vec3(0.05, 0.0, -0.05)});
  return spec;
}

// Scenes are expensive to build; tests in one binary share these.
inline const GeneratedScene& unchanged_scene() {
  static const GeneratedScene scene = generate_scene(unchanged_spec(3), 11);
  return scene;
}

inline const GeneratedScene& changed_scene() {
  static const GeneratedScene scene = generate_scene(changed_spec(3), 11);
  return scene;
}

}  // namespace cpo::test
