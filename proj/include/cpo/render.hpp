#pragma once

// Z-buffered point splatting into equirectangular views.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"
#include "cpo/types.hpp"

namespace cpo {

inline constexpr int kDefaultSplatRadius = 1;

struct SyntheticView {
  Panorama image;
  Pose pose;
  // Flat pixel index (row * W + col) of the pixel a point landed on and won,
  // or -1 when it was occluded there or never projected.
  std::vector<std::int32_t> point_pixel;
  // Winning point per pixel, -1 for holes.
  std::vector<std::int32_t> pixel_owner;
  // Camera-frame range of the winning point, NaN for holes.
  std::vector<float> pixel_range;
};

namespace render_detail {

// Ranges are compared on a 1 nm lattice; equal lattice values fall back to
// the lower point index. The order is total, so the result does not depend
// on the order points are visited in.
struct DepthKey {
  std::uint64_t range = std::numeric_limits<std::uint64_t>::max();
  std::int32_t index = -1;

  bool operator<(const DepthKey& o) const {
    return range != o.range ? range < o.range : index < o.index;
  }
};

inline std::uint64_t quantize_range(double r) {
  return static_cast<std::uint64_t>(std::floor(r * 1e9));
}

}  // namespace render_detail

// Number of render_view calls since process start; lets tests check how
// many explicit renders a stage performed.
inline std::atomic<std::uint64_t>& render_counter() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

// Flat pixel an image coordinate falls on: nearest pixel center, wrapped in
// u and clamped in v.
inline int pixel_col(double u, int width) {
  int col = static_cast<int>(std::floor(u + 0.5));
  if (col >= width) col -= width;
  if (col < 0) col += width;
  return col;
}

inline int pixel_row(double v, int height) {
  const int row = static_cast<int>(std::floor(v + 0.5));
  return std::clamp(row, 0, height - 1);
}

namespace render_detail {

struct ZBuffer {
  std::vector<DepthKey> slots;     // per pixel
  std::vector<std::int32_t> center;  // per point, flat pixel or -1
  std::vector<float> range;          // per point
};

inline void rasterize(const PointCloud& cloud, const Pose& pose, int height, int splat_radius, ZBuffer& zb) {
  if (height < 32) throw Error("render height must be at least 32");
  if (splat_radius < 0) throw Error("splat radius must be non-negative");
  render_counter().fetch_add(1, std::memory_order_relaxed);
  const int width = 2 * height;
  const std::size_t n = cloud.size();
  zb.slots.assign(static_cast<std::size_t>(height) * width, DepthKey{});
  zb.center.assign(n, -1);
  zb.range.assign(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = pose.apply(cloud.positions[i]);
    const double r = p.norm();
    if (r < 1e-12) continue;
    const PixelCoord px = project(p, height, width);
    const int col = pixel_col(px.u, width);
    const int row = pixel_row(px.v, height);
    zb.center[i] = row * width + col;
    zb.range[i] = static_cast<float>(r);
    const DepthKey key{quantize_range(r), static_cast<std::int32_t>(i)};
    for (int dr = -splat_radius; dr <= splat_radius; ++dr) {
      const int rr = row + dr;
      if (rr < 0 || rr >= height) continue;
      for (int dc = -splat_radius; dc <= splat_radius; ++dc) {
        int cc = col + dc;
        if (cc < 0) cc += width;
        if (cc >= width) cc -= width;
        DepthKey& slot = zb.slots[static_cast<std::size_t>(rr) * width + cc];
        if (key < slot) slot = key;
      }
    }
  }
}

inline std::int32_t winning_pixel(const ZBuffer& zb, std::size_t i) {
  const std::int32_t c = zb.center[i];
  return c >= 0 && zb.slots[c].index == static_cast<std::int32_t>(i) ? c : -1;
}

inline ZBuffer& scratch_zbuffer() {
  thread_local ZBuffer zb;
  return zb;
}

}  // namespace render_detail

// Renders `cloud` seen from a camera whose world-to-camera transform is
// `pose`. Points at the camera center are skipped.
inline SyntheticView render_view(const PointCloud& cloud, const Pose& pose, int height,
                                 int splat_radius = kDefaultSplatRadius) {
  auto& zb = render_detail::scratch_zbuffer();
  render_detail::rasterize(cloud, pose, height, splat_radius, zb);
  const int width = 2 * height;
  const std::size_t n = cloud.size();
  const std::size_t npix = zb.slots.size();

  SyntheticView view;
  view.pose = pose;
  view.image = Panorama(height, width);
  view.pixel_owner.assign(npix, -1);
  view.pixel_range.assign(npix, std::numeric_limits<float>::quiet_NaN());
  view.point_pixel.resize(n);
  auto& pixels = view.image.pixels();
  auto& valid = view.image.valid_mask();
  for (std::size_t k = 0; k < npix; ++k) {
    const std::int32_t owner = zb.slots[k].index;
    if (owner < 0) continue;
    const Color& c = cloud.colors[owner];
    pixels[3 * k + 0] = static_cast<float>(c.x());
    pixels[3 * k + 1] = static_cast<float>(c.y());
    pixels[3 * k + 2] = static_cast<float>(c.z());
    valid[k] = 1;
    view.pixel_owner[k] = owner;
    view.pixel_range[k] = zb.range[owner];
  }
  for (std::size_t i = 0; i < n; ++i) view.point_pixel[i] = render_detail::winning_pixel(zb, i);
  return view;
}

// The point_pixel field of render_view(cloud, pose, height, splat_radius),
// without building the image.
inline std::vector<std::int32_t> render_point_pixels(const PointCloud& cloud, const Pose& pose, int height,
                                                     int splat_radius = kDefaultSplatRadius) {
  auto& zb = render_detail::scratch_zbuffer();
  render_detail::rasterize(cloud, pose, height, splat_radius, zb);
  std::vector<std::int32_t> out(cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = render_detail::winning_pixel(zb, i);
  return out;
}

// Integer pixel shift equivalent to a yaw of `alpha` radians, or throws
// NonIntegerShift.
inline int yaw_to_pixel_shift(double alpha, int width) {
  const double k = alpha * width / kTwoPi;
  const double rk = std::round(k);
  if (std::abs(k - rk) > 1e-6) throw NonIntegerShift("yaw does not correspond to a whole pixel shift");
  long long s = static_cast<long long>(rk) % width;
  if (s < 0) s += width;
  return static_cast<int>(s);
}

// The view a camera at the same position sees after yawing by `alpha`
// (camera-frame rotation Rz(alpha) applied on the left). Pure index shuffling.
inline SyntheticView yaw_shift_view(const SyntheticView& view, double alpha) {
  const int height = view.image.height();
  const int width = view.image.width();
  const int shift = yaw_to_pixel_shift(alpha, width);
  const Mat3 rz = rotation_z(alpha);

  SyntheticView out;
  out.pose = Pose{rz * view.pose.rotation, rz * view.pose.translation};
  out.image = Panorama(height, width);
  const std::size_t npix = static_cast<std::size_t>(height) * width;
  out.pixel_owner.assign(npix, -1);
  out.pixel_range.assign(npix, std::numeric_limits<float>::quiet_NaN());
  auto remap = [&](std::size_t k) {
    const std::size_t row = k / width;
    const std::size_t col = (k % width + shift) % width;
    return row * width + col;
  };
  const auto& src_px = view.image.pixels();
  const auto& src_valid = view.image.valid_mask();
  auto& dst_px = out.image.pixels();
  auto& dst_valid = out.image.valid_mask();
  for (std::size_t k = 0; k < npix; ++k) {
    const std::size_t d = remap(k);
    dst_px[3 * d + 0] = src_px[3 * k + 0];
    dst_px[3 * d + 1] = src_px[3 * k + 1];
    dst_px[3 * d + 2] = src_px[3 * k + 2];
    dst_valid[d] = src_valid[k];
    out.pixel_owner[d] = view.pixel_owner[k];
    out.pixel_range[d] = view.pixel_range[k];
  }
  out.point_pixel = view.point_pixel;
  for (auto& p : out.point_pixel) {
    if (p >= 0) p = static_cast<std::int32_t>(remap(static_cast<std::size_t>(p)));
  }
  return out;
}

}  // namespace cpo
