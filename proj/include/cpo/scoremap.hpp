#pragma once

// Change-attenuation weights: a per-patch 2D map on the query image and a
// per-point 3D map on the cloud, both built from patch histogram
// intersections between the query and synthetic views.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/histogram.hpp"
#include "cpo/render.hpp"
#include "cpo/types.hpp"

namespace cpo {

inline constexpr double kUnobservedPointScore = 0.5;

struct ScoreMap2D {
  PatchGrid grid;
  std::vector<double> scores;  // one per patch

  static ScoreMap2D uniform(const PatchGrid& grid, double value = 1.0) {
    return {grid, std::vector<double>(grid.patch_count(), value)};
  }

  // Per-pixel map, row-major H x W, by patch replication.
  std::vector<double> expand() const {
    std::vector<double> out(static_cast<std::size_t>(grid.height) * grid.width);
    for (int r = 0; r < grid.height; ++r)
      for (int c = 0; c < grid.width; ++c)
        out[static_cast<std::size_t>(r) * grid.width + c] = scores[grid.patch_of_pixel(r, c)];
    return out;
  }
};

struct ScoreMap3D {
  std::vector<double> scores;  // aligned with cloud indices
  std::vector<std::int32_t> counts;

  static ScoreMap3D uniform(std::size_t n, double value = 1.0) {
    return {std::vector<double>(n, value), std::vector<std::int32_t>(n, 0)};
  }
};

// M_i = max over views of the intersection between patch i of the view and
// patch i of the query.
inline ScoreMap2D build_2d_scoremap(const PatchHistograms& query_hists,
                                    std::span<const PatchHistograms> view_hists) {
  if (view_hists.empty()) throw EmptyViewSet();
  ScoreMap2D map{query_hists.grid, std::vector<double>(query_hists.grid.patch_count(), 0.0)};
  for (const auto& view : view_hists) {
    if (!(view.grid == query_hists.grid) || view.bins != query_hists.bins)
      throw GridMismatch("view histograms use a different grid");
    for (int i = 0; i < map.grid.patch_count(); ++i)
      map.scores[i] = std::max(map.scores[i], intersection(view.patch(i), query_hists.patch(i)));
  }
  return map;
}

// Streams views into per-point means of back-projected patch scores. Each
// point accumulates with Neumaier compensation so view order only matters
// at the last-ulp level.
class ScoreMap3DAccumulator {
 public:
  ScoreMap3DAccumulator(std::size_t point_count, const PatchHistograms& query_hists)
      : query_(&query_hists), sum_(point_count, 0.0), comp_(point_count, 0.0), count_(point_count, 0) {}

  void add_view(const SyntheticView& view) {
    const PatchHistograms hists = compute_histograms(view.image, query_->grid, query_->bins);
    add_view(view, patch_intersections(hists, *query_));
  }

  // Back-projects precomputed per-patch scores of `view`.
  void add_view(const SyntheticView& view, std::span<const double> patch_scores) {
    add_view(std::span<const std::int32_t>(view.point_pixel), patch_scores);
  }

  // Back-projects per-patch scores through a point-to-pixel map.
  void add_view(std::span<const std::int32_t> point_pixel, std::span<const double> patch_scores) {
    const PatchGrid& g = query_->grid;
    if (point_pixel.size() != sum_.size()) throw Error("view was rendered from a different cloud");
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const std::int32_t pix = point_pixel[i];
      if (pix < 0) continue;
      add(i, patch_scores[g.patch_of_pixel(pix / g.width, pix % g.width)]);
    }
  }

  ScoreMap3D finish(double unobserved = kUnobservedPointScore) const {
    ScoreMap3D out;
    out.scores.resize(sum_.size());
    out.counts = count_;
    for (std::size_t i = 0; i < sum_.size(); ++i)
      out.scores[i] = count_[i] > 0 ? (sum_[i] + comp_[i]) / count_[i] : unobserved;
    return out;
  }

 private:
  void add(std::size_t i, double x) {
    const double t = sum_[i] + x;
    if (std::abs(sum_[i]) >= std::abs(x))
      comp_[i] += (sum_[i] - t) + x;
    else
      comp_[i] += (x - t) + sum_[i];
    sum_[i] = t;
    ++count_[i];
  }

  const PatchHistograms* query_;
  std::vector<double> sum_;
  std::vector<double> comp_;
  std::vector<std::int32_t> count_;
};

inline ScoreMap3D build_3d_scoremap(const PointCloud& cloud, std::span<const SyntheticView> views,
                                    const PatchHistograms& query_hists) {
  ScoreMap3DAccumulator acc(cloud.size(), query_hists);
  for (const auto& v : views) acc.add_view(v);
  return acc.finish();
}

}  // namespace cpo
