#pragma once

// Patch-grid color histograms, histogram intersection, and histogram
// generation for novel views by warping patch centroids onto a cached view.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"
#include "cpo/render.hpp"
#include "cpo/types.hpp"

namespace cpo {

inline constexpr int kDefaultGridRows = 8;
inline constexpr int kDefaultGridCols = 16;
inline constexpr int kDefaultBins = 8;

struct PatchGrid {
  int rows = kDefaultGridRows;
  int cols = kDefaultGridCols;
  int height = 512;
  int width = 1024;

  static PatchGrid make(int rows, int cols, int height) {
    PatchGrid g{rows, cols, height, 2 * height};
    g.check();
    return g;
  }

  void check() const {
    if (rows <= 0 || cols <= 0 || height <= 0 || width <= 0 || height % rows != 0 ||
        width % cols != 0)
      throw GridMismatch("patch grid must evenly divide the image");
  }

  int patch_count() const { return rows * cols; }
  int patch_height() const { return height / rows; }
  int patch_width() const { return width / cols; }

  PixelCoord centroid(int row, int col) const {
    return {(col + 0.5) * width / cols - 0.5, (row + 0.5) * height / rows - 0.5};
  }
  PixelCoord centroid(int patch) const { return centroid(patch / cols, patch % cols); }

  int patch_of_pixel(int row, int col) const {
    return (row / patch_height()) * cols + col / patch_width();
  }

  bool operator==(const PatchGrid&) const = default;
};

// Per-patch marginal RGB histograms. Layout: [patch][channel][bin].
struct PatchHistograms {
  PatchGrid grid;
  int bins = kDefaultBins;
  std::vector<double> data;
  std::vector<int> valid_count;

  std::size_t stride() const { return 3 * static_cast<std::size_t>(bins); }

  std::span<const double> patch(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * stride(), stride()};
  }
  std::span<double> patch(int i) {
    return {data.data() + static_cast<std::size_t>(i) * stride(), stride()};
  }

  bool operator==(const PatchHistograms&) const = default;
};

inline int color_bin(double c, int bins) {
  const int b = static_cast<int>(std::floor(c * bins));
  return std::clamp(b, 0, bins - 1);
}

inline PatchHistograms compute_histograms(const Panorama& image, const PatchGrid& grid,
                                          int bins = kDefaultBins) {
  grid.check();
  if (image.height() != grid.height || image.width() != grid.width)
    throw GridMismatch("patch grid does not match image size");
  if (bins < 2) throw Error("histograms need at least two bins");

  PatchHistograms h;
  h.grid = grid;
  h.bins = bins;
  h.data.assign(static_cast<std::size_t>(grid.patch_count()) * h.stride(), 0.0);
  h.valid_count.assign(grid.patch_count(), 0);

  const int ph = grid.patch_height();
  const int pw = grid.patch_width();
  const auto& px = image.pixels();
  const auto& valid = image.valid_mask();
  std::vector<int> counts(h.stride());
  for (int pr = 0; pr < grid.rows; ++pr) {
    for (int pc = 0; pc < grid.cols; ++pc) {
      std::fill(counts.begin(), counts.end(), 0);
      int n = 0;
      for (int r = pr * ph; r < (pr + 1) * ph; ++r) {
        for (int c = pc * pw; c < (pc + 1) * pw; ++c) {
          const std::size_t k = image.index(r, c);
          if (!valid[k]) continue;
          ++n;
          for (int ch = 0; ch < 3; ++ch) ++counts[ch * bins + color_bin(px[3 * k + ch], bins)];
        }
      }
      const int patch = pr * grid.cols + pc;
      h.valid_count[patch] = n;
      // Patches with under 1% coverage carry no usable distribution.
      if (n == 0 || 100 * n < ph * pw) continue;
      auto out = h.patch(patch);
      for (std::size_t b = 0; b < out.size(); ++b) out[b] = static_cast<double>(counts[b]) / n;
    }
  }
  return h;
}

// Histogram intersection averaged over the three channels. In [0, 1] for
// normalized inputs; 0 when either side is empty.
inline double intersection(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::min(a[k], b[k]);
  return s / 3.0;
}

inline std::vector<double> patch_intersections(const PatchHistograms& a, const PatchHistograms& b) {
  if (!(a.grid == b.grid) || a.bins != b.bins) throw GridMismatch("histogram layouts differ");
  std::vector<double> out(a.grid.patch_count());
  for (int i = 0; i < a.grid.patch_count(); ++i) out[i] = intersection(a.patch(i), b.patch(i));
  return out;
}

// Pure-rotation centroid warp: p = project(R_rel * unproject(c)).
inline PixelCoord warp_centroid(const PixelCoord& c, const Mat3& rel_rotation, int height, int width) {
  return project(rel_rotation * unproject(c, height, width), height, width);
}

// General warp with the centroid lifted to `depth` meters:
// p = project(R_rel * (depth * unproject(c)) + t_rel).
inline PixelCoord warp_centroid(const PixelCoord& c, double depth, const Pose& rel_pose, int height,
                                int width) {
  return project(rel_pose.apply(depth * unproject(c, height, width)), height, width);
}

// Nearest patch centroid in wrapped-u pixel distance. The centroids form a
// product grid, so the minimizer separates per axis.
inline int nearest_centroid(const PatchGrid& grid, const PixelCoord& p) {
  const double x = (p.u + 0.5) * grid.cols / grid.width - 0.5;
  const double y = (p.v + 0.5) * grid.rows / grid.height - 0.5;
  int col = static_cast<int>(std::floor(x + 0.5)) % grid.cols;
  if (col < 0) col += grid.cols;
  const int row = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, grid.rows - 1);
  return row * grid.cols + col;
}

// Source patch in the cached view for every patch of a view rotated by
// `rel_rotation` (novel-camera directions to cached-camera directions).
inline std::vector<std::int32_t> rotation_sources(const PatchGrid& grid, const Mat3& rel_rotation) {
  std::vector<std::int32_t> src(grid.patch_count());
  for (int i = 0; i < grid.patch_count(); ++i)
    src[i] = nearest_centroid(grid, warp_centroid(grid.centroid(i), rel_rotation, grid.height, grid.width));
  return src;
}

inline PatchHistograms gather_histograms(const PatchHistograms& cached,
                                         std::span<const std::int32_t> sources) {
  PatchHistograms out;
  out.grid = cached.grid;
  out.bins = cached.bins;
  out.data.resize(cached.data.size());
  out.valid_count.resize(cached.valid_count.size());
  const std::size_t stride = cached.stride();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::copy_n(cached.data.begin() + sources[i] * stride, stride, out.data.begin() + i * stride);
    out.valid_count[i] = cached.valid_count[sources[i]];
  }
  return out;
}

inline PatchHistograms fast_rotated_histograms(const PatchHistograms& cached, const Mat3& rel_rotation) {
  const auto src = rotation_sources(cached.grid, rel_rotation);
  return gather_histograms(cached, src);
}

// Nearest-centroid lookups for a fixed rotation list, shared by every cached
// view rendered on the same grid.
struct RotationTable {
  PatchGrid grid;
  std::size_t rotation_count = 0;
  std::vector<std::int32_t> sources;  // [rotation][patch]

  std::span<const std::int32_t> row(std::size_t r) const {
    const auto p = static_cast<std::size_t>(grid.patch_count());
    return {sources.data() + r * p, p};
  }
};

inline RotationTable precompute_rotation_tables(const PatchGrid& grid,
                                                std::span<const Mat3> rel_rotations) {
  RotationTable t;
  t.grid = grid;
  t.rotation_count = rel_rotations.size();
  t.sources.reserve(rel_rotations.size() * grid.patch_count());
  for (const Mat3& r : rel_rotations) {
    const auto src = rotation_sources(grid, r);
    t.sources.insert(t.sources.end(), src.begin(), src.end());
  }
  return t;
}

inline PatchHistograms fast_rotated_histograms(const PatchHistograms& cached, const RotationTable& table,
                                               std::size_t rotation_index) {
  return gather_histograms(cached, table.row(rotation_index));
}

// Median camera-frame range of the points visible in each patch; NaN for
// patches without any.
inline std::vector<double> patch_depths(const SyntheticView& view, const PatchGrid& grid) {
  std::vector<std::vector<float>> ranges(grid.patch_count());
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const float d = view.pixel_range[static_cast<std::size_t>(r) * grid.width + c];
      if (!std::isnan(d)) ranges[grid.patch_of_pixel(r, c)].push_back(d);
    }
  }
  std::vector<double> out(grid.patch_count(), std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < grid.patch_count(); ++i) {
    auto& v = ranges[i];
    if (v.empty()) continue;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    out[i] = *mid;
  }
  return out;
}

// Histograms for a view displaced by `rel_pose` (novel camera to cached
// camera), lifting each novel centroid to the depth of the same patch in
// the cached view. Patches without depth fall back to the rotation warp.
inline PatchHistograms fast_warped_histograms(const PatchHistograms& cached, std::span<const double> depths,
                                              const Pose& rel_pose) {
  const PatchGrid& g = cached.grid;
  std::vector<std::int32_t> src(g.patch_count());
  for (int i = 0; i < g.patch_count(); ++i) {
    const PixelCoord c = g.centroid(i);
    PixelCoord p;
    try {
      p = std::isnan(depths[i]) ? warp_centroid(c, rel_pose.rotation, g.height, g.width)
                                : warp_centroid(c, depths[i], rel_pose, g.height, g.width);
    } catch (const DegeneratePoint&) {
      p = c;
    }
    src[i] = nearest_centroid(g, p);
  }
  return gather_histograms(cached, src);
}

}  // namespace cpo
