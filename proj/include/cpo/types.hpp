#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"

namespace cpo {

using Color = Eigen::Vector3d;

struct AlignedBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

// Reference map: positions in meters, colors in [0, 1].
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Color> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void push_back(const Vec3& p, const Color& c) {
    positions.push_back(p);
    colors.push_back(c);
  }

  bool operator==(const PointCloud&) const = default;
};

// Throws InputError-derived exceptions when the cloud breaks its invariants.
inline void validate(const PointCloud& cloud) {
  if (cloud.empty()) throw ParseError("point cloud has no points");
  if (cloud.positions.size() != cloud.colors.size())
    throw ParseError("point cloud position/color counts differ");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.positions[i].allFinite())
      throw ParseError("non-finite coordinate at point " + std::to_string(i));
    const Color& c = cloud.colors[i];
    if (!c.allFinite() || c.minCoeff() < 0.0 || c.maxCoeff() > 1.0)
      throw ParseError("color out of [0,1] at point " + std::to_string(i));
  }
}

// Equirectangular RGB image with a per-pixel validity mask. Row-major,
// channels interleaved.
class Panorama {
 public:
  Panorama() = default;
  Panorama(int height, int width)
      : height_(height),
        width_(width),
        pixels_(static_cast<std::size_t>(height) * width * 3, 0.0f),
        valid_(static_cast<std::size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return valid_.size(); }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  float channel(int row, int col, int c) const { return pixels_[index(row, col) * 3 + c]; }
  Color color(int row, int col) const {
    const float* p = &pixels_[index(row, col) * 3];
    return {p[0], p[1], p[2]};
  }
  void set_color(int row, int col, const Color& c) {
    float* p = &pixels_[index(row, col) * 3];
    p[0] = static_cast<float>(c.x());
    p[1] = static_cast<float>(c.y());
    p[2] = static_cast<float>(c.z());
  }

  bool valid(int row, int col) const { return valid_[index(row, col)] != 0; }
  void set_valid(int row, int col, bool v) { valid_[index(row, col)] = v ? 1 : 0; }

  std::vector<float>& pixels() { return pixels_; }
  const std::vector<float>& pixels() const { return pixels_; }
  std::vector<unsigned char>& valid_mask() { return valid_; }
  const std::vector<unsigned char>& valid_mask() const { return valid_; }

  void fill_valid(bool v) { std::fill(valid_.begin(), valid_.end(), v ? 1 : 0); }

  bool operator==(const Panorama&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
  std::vector<unsigned char> valid_;
};

inline void require_equirect(int height, int width) {
  if (height <= 0 || width != 2 * height)
    throw AspectError("equirectangular image must be W = 2H, got " + std::to_string(width) +
                      "x" + std::to_string(height));
}

}  // namespace cpo
