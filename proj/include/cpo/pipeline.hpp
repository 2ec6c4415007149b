#pragma once

// End-to-end localization: color matching, translation/rotation search,
// score maps, candidate ranking, refinement and final selection.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpo/color_match.hpp"
#include "cpo/config.hpp"
#include "cpo/geometry.hpp"
#include "cpo/histogram.hpp"
#include "cpo/parallel.hpp"
#include "cpo/random.hpp"
#include "cpo/refine.hpp"
#include "cpo/render.hpp"
#include "cpo/scoremap.hpp"
#include "cpo/search.hpp"
#include "cpo/types.hpp"

namespace cpo {

inline constexpr double kDefaultTranslationThreshold = 0.05;  // meters
inline constexpr double kDefaultRotationThreshold = 5.0;      // degrees

struct GroundTruthComparison {
  Pose pose;
  double translation_error = 0.0;  // camera-center distance, meters
  double rotation_error = 0.0;     // degrees
  double translation_threshold = kDefaultTranslationThreshold;
  double rotation_threshold = kDefaultRotationThreshold;
  bool translation_correct = false;
  bool rotation_correct = false;
  bool correct = false;

  bool operator==(const GroundTruthComparison&) const = default;
};

inline GroundTruthComparison compare_to_ground_truth(const Pose& estimate, const Pose& truth,
                                                     double tau_t = kDefaultTranslationThreshold,
                                                     double tau_r = kDefaultRotationThreshold) {
  GroundTruthComparison g;
  g.pose = truth;
  g.translation_error = (estimate.center() - truth.center()).norm();
  g.rotation_error = rad_to_deg(rotation_error(estimate.rotation, truth.rotation));
  g.translation_threshold = tau_t;
  g.rotation_threshold = tau_r;
  g.translation_correct = g.translation_error < tau_t;
  g.rotation_correct = g.rotation_error < tau_r;
  g.correct = g.translation_correct && g.rotation_correct;
  return g;
}

struct CandidateReport {
  Pose initial_pose;
  std::size_t translation_index = 0;
  std::size_t rotation_index = 0;
  double weighted_score = 0.0;
  // Sampling loss used for ranking when histogram initialization is off.
  std::optional<double> rank_loss;
  Pose refined_pose;
  double final_loss = 0.0;
  bool converged = false;
  std::vector<double> loss_trace;

  bool operator==(const CandidateReport&) const = default;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;

  bool operator==(const StageTiming&) const = default;
};

struct LocalizationReport {
  Pose pose;
  double final_loss = 0.0;
  std::size_t selected_candidate = 0;
  std::vector<CandidateReport> candidates;
  std::vector<StageTiming> timings_ms;
  std::optional<GroundTruthComparison> ground_truth;
  // Set when the partition offered fewer empty cells than requested.
  bool translations_truncated = false;

  bool operator==(const LocalizationReport&) const = default;
};

// Area resampling to a new height (W = 2H). Invalid source pixels are
// ignored; a target pixel is valid when any source pixel under it is.
inline Panorama resample_panorama(const Panorama& src, int height) {
  require_equirect(src.height(), src.width());
  if (src.height() == height) return src;
  const int width = 2 * height;
  Panorama out(height, width);
  const double scale = static_cast<double>(src.height()) / height;
  for (int r = 0; r < height; ++r) {
    const int r0 = static_cast<int>(std::floor(r * scale));
    const int r1 = std::max(r0 + 1, static_cast<int>(std::floor((r + 1) * scale)));
    for (int c = 0; c < width; ++c) {
      const int c0 = static_cast<int>(std::floor(c * scale));
      const int c1 = std::max(c0 + 1, static_cast<int>(std::floor((c + 1) * scale)));
      Color acc = Color::Zero();
      int n = 0;
      for (int rr = r0; rr < std::min(r1, src.height()); ++rr)
        for (int cc = c0; cc < std::min(c1, src.width()); ++cc)
          if (src.valid(rr, cc)) {
            acc += src.color(rr, cc);
            ++n;
          }
      if (n == 0) continue;
      out.set_color(r, c, acc / n);
      out.set_valid(r, c, true);
    }
  }
  return out;
}

// Shared state of the search stages. Holds references into itself, so it
// lives behind a pointer.
struct SearchState {
  PatchGrid grid;
  Panorama query;  // color-matched, original resolution
  PatchHistograms query_hists;
  std::vector<Vec3> translations;
  bool translations_truncated = false;
  std::vector<Mat3> rotations;
  TranslationViews views;
  RotationTable table;
  std::optional<RotationScorer> scorer;
  // Top-R rotation indices per translation under the unweighted score.
  std::vector<std::vector<std::size_t>> top_rotations;

  SearchState() = default;
  SearchState(const SearchState&) = delete;
  SearchState& operator=(const SearchState&) = delete;
};

struct ScoreMaps {
  ScoreMap2D map2d;
  ScoreMap3D map3d;
};

namespace pipeline_detail {

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<StageTiming>* sink) : sink_(sink), last_(std::chrono::steady_clock::now()) {}

  void lap(const char* stage) {
    const auto now = std::chrono::steady_clock::now();
    if (sink_) sink_->push_back({stage, std::chrono::duration<double, std::milli>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageTiming>* sink_;
  std::chrono::steady_clock::time_point last_;
};

// Seed streams of one run.
enum Stream : std::uint64_t { kRotations = 1, kRefine = 2, kLossRank = 3 };

inline double unweighted(const RotationScorer& s, std::size_t t, std::size_t r, int patches) {
  double v = 0.0;
  for (int i = 0; i < patches; ++i) v += s.patch_score(t, r, i);
  return v;
}

}  // namespace pipeline_detail

// Color matching, translation views, rotation table and the unweighted
// first pass.
inline std::unique_ptr<SearchState> prepare_search(const PointCloud& cloud, const Panorama& query,
                                                   const PipelineConfig& config,
                                                   std::vector<StageTiming>* timings = nullptr) {
  using namespace pipeline_detail;
  config.check();
  validate(cloud);
  require_equirect(query.height(), query.width());
  Stopwatch watch(timings);
  auto st = std::make_unique<SearchState>();
  st->grid = config.grid();

  st->query = config.color_match ? apply_color_map(fit_color_map(query, cloud, config.color_bins), query) : query;
  st->query_hists = compute_histograms(resample_panorama(st->query, config.image_height), st->grid, config.bins);
  watch.lap("color_match");

  const FreeSpacePartition partition =
      build_partition(cloud, config.partition, config.partition_depth, config.cell_edge);
  TranslationProposals proposals = propose_translations(partition, config.translations, config.heights);
  st->translations = std::move(proposals.positions);
  st->translations_truncated = proposals.truncated;
  st->rotations = sample_rotations(config.rotations, mix_seed(config.seed, kRotations));
  watch.lap("proposals");

  st->views = render_translation_views(cloud, st->translations, st->grid, config.bins, config.splat_radius);
  st->table = precompute_rotation_tables(st->grid, relative_rotations(st->rotations));
  st->scorer.emplace(st->views, st->table, st->query_hists);
  watch.lap("translation_views");

  const int patches = st->grid.patch_count();
  // Optional N_f filter on the unrotated views.
  if (config.translation_filter > 0 && config.translation_filter < st->translations.size()) {
    const Mat3 identity = Mat3::Identity();
    const RotationTable id_table = precompute_rotation_tables(st->grid, std::span<const Mat3>(&identity, 1));
    const RotationScorer id_scorer(st->views, id_table, st->query_hists);
    std::vector<std::size_t> order(st->translations.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(order.size());
    for (std::size_t t = 0; t < order.size(); ++t) score[t] = unweighted(id_scorer, t, 0, patches);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    order.resize(config.translation_filter);
    std::sort(order.begin(), order.end());
    TranslationViews kept;
    for (const auto t : order) {
      kept.centers.push_back(st->views.centers[t]);
      kept.hists.push_back(std::move(st->views.hists[t]));
    }
    st->views = std::move(kept);
    st->translations = st->views.centers;
    st->scorer.emplace(st->views, st->table, st->query_hists);
    watch.lap("translation_filter");
  }

  const std::size_t keep = std::min(config.scoremap_rotations, st->rotations.size());
  st->top_rotations.resize(st->translations.size());
  parallel_for(st->translations.size(), [&](std::size_t t) {
    std::vector<std::pair<double, std::size_t>> scored(st->rotations.size());
    for (std::size_t r = 0; r < st->rotations.size(); ++r) scored[r] = {unweighted(*st->scorer, t, r, patches), r};
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    auto& top = st->top_rotations[t];
    for (std::size_t k = 0; k < keep; ++k) top.push_back(scored[k].second);
  });
  watch.lap("first_pass");
  return st;
}

// 2D map from the fast-path histograms of the score-map view set.
inline ScoreMap2D build_search_2d_map(const SearchState& st) {
  ScoreMap2D map{st.grid, std::vector<double>(st.grid.patch_count(), 0.0)};
  if (st.translations.empty()) throw EmptyViewSet();
  for (std::size_t t = 0; t < st.translations.size(); ++t)
    for (const auto r : st.top_rotations[t])
      for (int i = 0; i < st.grid.patch_count(); ++i)
        map.scores[i] = std::max(map.scores[i], st.scorer->patch_score(t, r, i));
  return map;
}

// 3D map: each view of the set is rendered explicitly for visibility and
// its fast-path patch scores are back-projected onto the visible points.
inline ScoreMap3D build_search_3d_map(const SearchState& st, const PointCloud& cloud, const PipelineConfig& config) {
  ScoreMap3DAccumulator acc(cloud.size(), st.query_hists);
  std::vector<std::pair<std::size_t, std::size_t>> views;
  for (std::size_t t = 0; t < st.translations.size(); ++t)
    for (const auto r : st.top_rotations[t]) views.emplace_back(t, r);
  if (views.empty()) throw EmptyViewSet();
  const std::size_t batch = static_cast<std::size_t>(std::max(1, max_threads()));
  std::vector<std::vector<std::int32_t>> pixels(batch);
  std::vector<double> scores(st.grid.patch_count());
  for (std::size_t b = 0; b < views.size(); b += batch) {
    const std::size_t n = std::min(batch, views.size() - b);
    parallel_for(n, [&](std::size_t k) {
      const auto [t, r] = views[b + k];
      pixels[k] = render_point_pixels(cloud, Pose::from_center(st.rotations[r], st.translations[t]),
                                      config.image_height, config.splat_radius);
    });
    for (std::size_t k = 0; k < n; ++k) {
      const auto [t, r] = views[b + k];
      for (int i = 0; i < st.grid.patch_count(); ++i) scores[i] = st.scorer->patch_score(t, r, i);
      acc.add_view(pixels[k], scores);
    }
  }
  return acc.finish();
}

inline ScoreMaps build_score_maps(const SearchState& st, const PointCloud& cloud, const PipelineConfig& config) {
  return {build_search_2d_map(st), build_search_3d_map(st, cloud, config)};
}

// Candidates by lowest sampling loss at the candidate pose.
inline std::vector<CandidateReport> rank_by_sampling_loss(const SearchState& st, const PointCloud& cloud,
                                                          std::span<const double> weights,
                                                          std::span<const double> patch_weights,
                                                          const PipelineConfig& config) {
  const auto subset = sample_subset(cloud.size(), config.loss_rank_points,
                                    mix_seed(config.seed, pipeline_detail::kLossRank));
  const std::size_t nr = st.rotations.size();
  std::vector<double> loss(st.translations.size() * nr);
  parallel_for(st.translations.size(), [&](std::size_t t) {
    for (std::size_t r = 0; r < nr; ++r)
      loss[t * nr + r] = sampling_loss(Pose::from_center(st.rotations[r], st.translations[t]), cloud, st.query,
                                       weights, subset, false)
                             .loss;
  });
  std::vector<std::size_t> order(loss.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(config.candidates, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return loss[a] != loss[b] ? loss[a] < loss[b] : a < b; });
  std::vector<CandidateReport> out;
  for (std::size_t j = 0; j < k; ++j) {
    CandidateReport c;
    c.translation_index = order[j] / nr;
    c.rotation_index = order[j] % nr;
    c.initial_pose = Pose::from_center(st.rotations[c.rotation_index], st.translations[c.translation_index]);
    c.weighted_score = st.scorer->weighted(c.translation_index, c.rotation_index, patch_weights);
    c.rank_loss = loss[order[j]];
    out.push_back(c);
  }
  return out;
}

inline std::vector<CandidateReport> rank_by_histograms(const SearchState& st, std::span<const double> patch_weights,
                                                       const PipelineConfig& config) {
  const auto top = top_candidates(st.translations, st.rotations, config.candidates,
                                  [&](std::size_t t, std::size_t r) { return st.scorer->weighted(t, r, patch_weights); });
  std::vector<CandidateReport> out;
  for (const auto& c : top) {
    CandidateReport rep;
    rep.initial_pose = c.pose;
    rep.translation_index = c.translation_index;
    rep.rotation_index = c.rotation_index;
    rep.weighted_score = c.weighted_score;
    out.push_back(rep);
  }
  return out;
}

inline LocalizationReport localize(const PointCloud& cloud, const Panorama& query, const PipelineConfig& config,
                                   ScoreMaps* maps_out = nullptr) {
  using namespace pipeline_detail;
  set_max_threads(config.threads);
  LocalizationReport report;
  auto st = prepare_search(cloud, query, config, &report.timings_ms);
  report.translations_truncated = st->translations_truncated;
  Stopwatch watch(&report.timings_ms);

  ScoreMaps maps{config.use_2d_map ? build_search_2d_map(*st) : ScoreMap2D::uniform(st->grid),
                 ScoreMap3D::uniform(cloud.size())};
  watch.lap("scoremap_2d");
  if (config.use_3d_map) maps.map3d = build_search_3d_map(*st, cloud, config);
  watch.lap("scoremap_3d");

  report.candidates = config.histogram_init
                          ? rank_by_histograms(*st, maps.map2d.scores, config)
                          : rank_by_sampling_loss(*st, cloud, maps.map3d.scores, maps.map2d.scores, config);
  watch.lap("ranking");

  RefineConfig rc = config.refine;
  rc.seed = mix_seed(config.seed, kRefine);
  std::vector<RefineResult> refined(report.candidates.size());
  parallel_for(refined.size(), [&](std::size_t k) {
    refined[k] = refine_pose(report.candidates[k].initial_pose, cloud, st->query, maps.map3d.scores, rc);
  });
  for (std::size_t k = 0; k < refined.size(); ++k) {
    report.candidates[k].refined_pose = refined[k].pose;
    report.candidates[k].final_loss = refined[k].final_loss;
    report.candidates[k].converged = refined[k].converged;
    report.candidates[k].loss_trace = refined[k].loss_trace;
  }
  const RefineResult& best = select_final(refined);
  report.selected_candidate = static_cast<std::size_t>(&best - refined.data());
  report.pose = best.pose;
  report.final_loss = best.final_loss;
  watch.lap("refinement");

  if (maps_out) *maps_out = std::move(maps);
  return report;
}

}  // namespace cpo
