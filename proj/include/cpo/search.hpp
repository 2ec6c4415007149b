#pragma once

// Candidate pose search: free-space translation proposals from an octree or
// uniform grid, one rendered view per translation, rotations scored through
// cached patch histograms, and score-weighted top-K selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"
#include "cpo/histogram.hpp"
#include "cpo/parallel.hpp"
#include "cpo/render.hpp"
#include "cpo/scoremap.hpp"
#include "cpo/types.hpp"

namespace cpo {

enum class PartitionMode { Octree, UniformGrid };

struct PartitionCell {
  Vec3 center;
  Vec3 size;  // edge lengths in meters
  int depth = 0;
  bool occupied = false;

  double volume() const { return size.prod(); }
  double min_edge() const { return size.minCoeff(); }
};

struct FreeSpacePartition {
  PartitionMode mode = PartitionMode::Octree;
  AlignedBox bounds;
  std::vector<PartitionCell> cells;  // leaves
};

inline AlignedBox bounding_box(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyInput("bounding box of an empty cloud");
  AlignedBox b{cloud.positions.front(), cloud.positions.front()};
  for (const auto& p : cloud.positions) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  // Flat or single-point clouds still need a box with volume.
  constexpr double kMinExtent = 1e-3;
  for (int k = 0; k < 3; ++k) {
    if (b.max[k] - b.min[k] < kMinExtent) {
      const double mid = 0.5 * (b.max[k] + b.min[k]);
      b.min[k] = mid - 0.5 * kMinExtent;
      b.max[k] = mid + 0.5 * kMinExtent;
    }
  }
  return b;
}

namespace search_detail {

inline void subdivide(const std::vector<Vec3>& positions, std::vector<std::uint32_t>& idx, const AlignedBox& box,
                      int depth, int max_depth, std::vector<PartitionCell>& out) {
  const Vec3 center = 0.5 * (box.min + box.max);
  if (idx.empty() || depth >= max_depth) {
    out.push_back({center, box.max - box.min, depth, !idx.empty()});
    return;
  }
  std::array<std::vector<std::uint32_t>, 8> children;
  for (const auto i : idx) {
    const Vec3& p = positions[i];
    const int o = (p.x() >= center.x() ? 1 : 0) | (p.y() >= center.y() ? 2 : 0) | (p.z() >= center.z() ? 4 : 0);
    children[o].push_back(i);
  }
  idx.clear();
  idx.shrink_to_fit();
  for (int o = 0; o < 8; ++o) {
    AlignedBox c;
    for (int k = 0; k < 3; ++k) {
      const bool upper = (o >> k) & 1;
      c.min[k] = upper ? center[k] : box.min[k];
      c.max[k] = upper ? box.max[k] : center[k];
    }
    subdivide(positions, children[o], c, depth + 1, max_depth, out);
  }
}

}  // namespace search_detail

// Octree leaves over the cloud's bounding box (occupied cells split down to
// `max_depth`), or a uniform grid of `cell_edge`-meter cells.
inline FreeSpacePartition build_partition(const PointCloud& cloud, PartitionMode mode, int max_depth = 5,
                                          double cell_edge = 1.0) {
  FreeSpacePartition part;
  part.mode = mode;
  part.bounds = bounding_box(cloud);
  if (mode == PartitionMode::Octree) {
    if (max_depth < 0) throw ConfigError("octree depth must be non-negative");
    std::vector<std::uint32_t> idx(cloud.size());
    std::iota(idx.begin(), idx.end(), 0u);
    search_detail::subdivide(cloud.positions, idx, part.bounds, 0, max_depth, part.cells);
    return part;
  }

  if (!(cell_edge > 0.0)) throw ConfigError("grid cell edge must be positive");
  const Vec3 extent = part.bounds.max - part.bounds.min;
  std::array<int, 3> n{};
  for (int k = 0; k < 3; ++k) n[k] = std::max(1, static_cast<int>(std::ceil(extent[k] / cell_edge - 1e-9)));
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(n[0]) * n[1] * n[2], 0);
  auto flat = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * n[1] + y) * n[0] + x; };
  for (const auto& p : cloud.positions) {
    std::array<int, 3> c{};
    for (int k = 0; k < 3; ++k)
      c[k] = std::clamp(static_cast<int>(std::floor((p[k] - part.bounds.min[k]) / cell_edge)), 0, n[k] - 1);
    occ[flat(c[0], c[1], c[2])] = 1;
  }
  for (int z = 0; z < n[2]; ++z)
    for (int y = 0; y < n[1]; ++y)
      for (int x = 0; x < n[0]; ++x) {
        const Vec3 lo = part.bounds.min + cell_edge * Vec3(x, y, z);
        part.cells.push_back({lo + Vec3::Constant(0.5 * cell_edge), Vec3::Constant(cell_edge), 0,
                              occ[flat(x, y, z)] != 0});
      }
  return part;
}

struct HeightRange {
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();

  bool operator==(const HeightRange&) const = default;
};

struct TranslationProposals {
  std::vector<Vec3> positions;
  // Set when fewer than the requested number of empty cells were available.
  bool truncated = false;
};

// Centers of empty cells, largest first. Cells of equal volume are taken in
// farthest-point order so the proposals spread over the free space.
inline TranslationProposals propose_translations(const FreeSpacePartition& partition, std::size_t count,
                                                 std::optional<HeightRange> heights = std::nullopt) {
  if (count == 0) throw ConfigError("number of translations must be at least 1");
  std::vector<std::size_t> empty;
  for (std::size_t i = 0; i < partition.cells.size(); ++i) {
    const auto& c = partition.cells[i];
    if (c.occupied) continue;
    if (heights && (c.center.z() < heights->min || c.center.z() > heights->max)) continue;
    empty.push_back(i);
  }
  if (empty.empty()) throw NoFreeSpace();

  std::stable_sort(empty.begin(), empty.end(), [&](std::size_t a, std::size_t b) {
    return partition.cells[a].volume() > partition.cells[b].volume();
  });

  TranslationProposals out;
  out.truncated = empty.size() < count;
  const std::size_t take = std::min(count, empty.size());
  std::vector<double> nearest(empty.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> used(empty.size(), 0);
  std::size_t group_begin = 0;
  while (out.positions.size() < take) {
    const double vol = partition.cells[empty[group_begin]].volume();
    std::size_t group_end = group_begin;
    while (group_end < empty.size() && partition.cells[empty[group_end]].volume() >= vol * (1.0 - 1e-9))
      ++group_end;
    for (std::size_t picked = group_begin; picked < group_end && out.positions.size() < take; ++picked) {
      std::size_t best = group_end;
      for (std::size_t j = group_begin; j < group_end; ++j) {
        if (used[j]) continue;
        if (best == group_end || nearest[j] > nearest[best]) best = j;
      }
      used[best] = 1;
      const Vec3 c = partition.cells[empty[best]].center;
      out.positions.push_back(c);
      for (std::size_t j = 0; j < empty.size(); ++j)
        nearest[j] = std::min(nearest[j], (partition.cells[empty[j]].center - c).squaredNorm());
    }
    group_begin = group_end;
  }
  return out;
}

struct CandidatePose {
  Pose pose;
  double weighted_score = 0.0;
  std::size_t translation_index = 0;
  std::size_t rotation_index = 0;
};

// One rendered, histogrammed view per translation with the camera axes
// aligned to the cloud frame. Rotations are applied later through the
// nearest-centroid table.
struct TranslationViews {
  std::vector<Vec3> centers;
  std::vector<PatchHistograms> hists;
};

inline TranslationViews render_translation_views(const PointCloud& cloud, std::span<const Vec3> centers,
                                                 const PatchGrid& grid, int bins,
                                                 int splat_radius = kDefaultSplatRadius) {
  TranslationViews tv;
  tv.centers.assign(centers.begin(), centers.end());
  tv.hists.resize(centers.size());
  parallel_for(centers.size(), [&](std::size_t i) {
    const SyntheticView view = render_view(cloud, Pose::from_center(Mat3::Identity(), centers[i]), grid.height,
                                           splat_radius);
    tv.hists[i] = compute_histograms(view.image, grid, bins);
  });
  return tv;
}

// Relative rotations for the table: a candidate with world-to-camera
// rotation R maps its camera directions d to R^T d in the cached frame.
inline std::vector<Mat3> relative_rotations(std::span<const Mat3> rotations) {
  std::vector<Mat3> rel;
  rel.reserve(rotations.size());
  for (const auto& r : rotations) rel.push_back(r.transpose());
  return rel;
}

// Per-patch intersections for every (translation, rotation) pair, computed
// from cached histograms: scores(t, r, i) = Lambda(h_{src(r,i)}(Y_t), h_i(I_Q)).
class RotationScorer {
 public:
  RotationScorer(const TranslationViews& views, const RotationTable& table, const PatchHistograms& query)
      : views_(&views), table_(&table), patches_(query.grid.patch_count()) {
    // pair[t][src * P + i] = Lambda(cached_t patch src, query patch i)
    pair_.resize(views.hists.size());
    parallel_for(views.hists.size(), [&](std::size_t t) {
      auto& m = pair_[t];
      m.resize(static_cast<std::size_t>(patches_) * patches_);
      for (int s = 0; s < patches_; ++s)
        for (int i = 0; i < patches_; ++i)
          m[static_cast<std::size_t>(s) * patches_ + i] = intersection(views.hists[t].patch(s), query.patch(i));
    });
  }

  std::size_t translation_count() const { return pair_.size(); }
  std::size_t rotation_count() const { return table_->rotation_count; }

  double patch_score(std::size_t t, std::size_t r, int i) const {
    return pair_[t][static_cast<std::size_t>(table_->row(r)[i]) * patches_ + i];
  }

  // w(Y) = sum_i M_i * Lambda_i
  double weighted(std::size_t t, std::size_t r, std::span<const double> weights) const {
    const auto src = table_->row(r);
    const auto& m = pair_[t];
    double s = 0.0;
    for (int i = 0; i < patches_; ++i) s += weights[i] * m[static_cast<std::size_t>(src[i]) * patches_ + i];
    return s;
  }

  PatchHistograms histograms(std::size_t t, std::size_t r) const {
    return fast_rotated_histograms(views_->hists[t], *table_, r);
  }

 private:
  const TranslationViews* views_;
  const RotationTable* table_;
  int patches_;
  std::vector<std::vector<double>> pair_;
};

// Orders by descending score, then translation index, then rotation index.
inline bool candidate_before(const CandidatePose& a, const CandidatePose& b) {
  if (a.weighted_score != b.weighted_score) return a.weighted_score > b.weighted_score;
  if (a.translation_index != b.translation_index) return a.translation_index < b.translation_index;
  return a.rotation_index < b.rotation_index;
}

// Top-K over a score function on the translation x rotation grid.
template <typename ScoreFn>
std::vector<CandidatePose> top_candidates(std::span<const Vec3> translations, std::span<const Mat3> rotations,
                                          std::size_t k, ScoreFn&& score) {
  const std::size_t total = translations.size() * rotations.size();
  if (total == 0) throw EmptyCandidateSet("no translation/rotation pairs to rank");
  if (k == 0 || k > total) throw EmptyCandidateSet("K must be in [1, translations x rotations]");
  std::vector<CandidatePose> all(total);
  parallel_for(translations.size(), [&](std::size_t t) {
    for (std::size_t r = 0; r < rotations.size(); ++r) {
      auto& c = all[t * rotations.size() + r];
      c.translation_index = t;
      c.rotation_index = r;
      c.weighted_score = score(t, r);
    }
  });
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), candidate_before);
  all.resize(k);
  for (auto& c : all) c.pose = Pose::from_center(rotations[c.rotation_index], translations[c.translation_index]);
  return all;
}

// Renders one view per translation, scores every rotation with the 2D-map
// weighted intersection and returns the K best candidates.
inline std::vector<CandidatePose> rank_candidates(const PatchHistograms& query_hists, const ScoreMap2D& scoremap,
                                                  std::span<const Vec3> translations,
                                                  std::span<const Mat3> rotations, const PointCloud& cloud,
                                                  int render_height, std::size_t k,
                                                  int splat_radius = kDefaultSplatRadius) {
  if (translations.empty() || rotations.empty()) throw EmptyCandidateSet("no candidates to rank");
  if (query_hists.grid.height != render_height) throw GridMismatch("render height differs from query grid");
  if (!(scoremap.grid == query_hists.grid)) throw GridMismatch("2D score map grid differs from query grid");
  const TranslationViews views =
      render_translation_views(cloud, translations, query_hists.grid, query_hists.bins, splat_radius);
  const auto rel = relative_rotations(rotations);
  const RotationTable table = precompute_rotation_tables(query_hists.grid, rel);
  const RotationScorer scorer(views, table, query_hists);
  return top_candidates(translations, rotations, k, [&](std::size_t t, std::size_t r) {
    return scorer.weighted(t, r, scoremap.scores);
  });
}

}  // namespace cpo
