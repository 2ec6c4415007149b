#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "cpo/histogram.hpp"
#include "cpo/render.hpp"
#include "cpo/scoremap.hpp"
#include "support.hpp"

using namespace cpo;

namespace {

const PatchGrid kGrid = PatchGrid::make(8, 16, 512);

std::vector<Pose> nearby_poses(const Pose& gt) {
  std::vector<Pose> out{gt};
  for (int k = 1; k <= 3; ++k) {
    const Mat3 rz = rotation_z(k * kTwoPi / 16);
    out.push_back(Pose{rz * gt.rotation, rz * gt.translation});
  }
  return out;
}

}  // namespace

TEST(ScoreMap2DTest, QueryInViewSetScoresOne) {
  const auto& scene = test::unchanged_scene();
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  const std::vector<PatchHistograms> views{compute_histograms(render_view(scene.reference, scene.queries[1].pose, 512).image, kGrid), q};
  const ScoreMap2D m = build_2d_scoremap(q, views);
  for (double s : m.scores) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(ScoreMap2DTest, InvalidViewsScoreZero) {
  const auto& scene = test::unchanged_scene();
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  Panorama empty(512, 1024);
  const std::vector<PatchHistograms> views{compute_histograms(empty, kGrid), compute_histograms(empty, kGrid)};
  for (double s : build_2d_scoremap(q, views).scores) EXPECT_EQ(s, 0.0);
}

TEST(ScoreMap2DTest, Errors) {
  const auto& scene = test::unchanged_scene();
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  EXPECT_THROW(build_2d_scoremap(q, {}), EmptyViewSet);
  const std::vector<PatchHistograms> other{compute_histograms(scene.queries[0].image, PatchGrid::make(4, 8, 512))};
  EXPECT_THROW(build_2d_scoremap(q, other), GridMismatch);
}

TEST(ScoreMap2DTest, AddingViewsNeverLowersScores) {
  const auto& scene = test::unchanged_scene();
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  std::vector<PatchHistograms> views;
  std::vector<double> prev(kGrid.patch_count(), 0.0);
  for (const Pose& p : nearby_poses(scene.queries[2].pose)) {
    views.push_back(compute_histograms(render_view(scene.reference, p, 512).image, kGrid));
    const ScoreMap2D m = build_2d_scoremap(q, views);
    for (int i = 0; i < kGrid.patch_count(); ++i) {
      EXPECT_GE(m.scores[i], prev[i]);
      EXPECT_LE(m.scores[i], 1.0 + 1e-12);
    }
    prev = m.scores;
  }
}

TEST(ScoreMap2DTest, RecoloredPatchIsTheMinimum) {
  const auto& scene = test::unchanged_scene();
  const Pose gt = scene.queries[0].pose;
  Panorama query = scene.queries[0].image;
  const int target = 3 * 16 + 5;
  for (int r = 0; r < 512; ++r)
    for (int c = 0; c < 1024; ++c)
      if (kGrid.patch_of_pixel(r, c) == target) {
        const Color x = query.color(r, c);
        query.set_color(r, c, Color(x.z(), 1.0 - x.x(), 0.5 * x.y()));
      }
  std::vector<PatchHistograms> views;
  for (const Pose& p : nearby_poses(gt)) views.push_back(compute_histograms(render_view(scene.reference, p, 512).image, kGrid));
  const ScoreMap2D m = build_2d_scoremap(compute_histograms(query, kGrid), views);
  const auto argmin = std::min_element(m.scores.begin(), m.scores.end()) - m.scores.begin();
  EXPECT_EQ(argmin, target);
  for (int i = 0; i < kGrid.patch_count(); ++i)
    if (i != target) {
      EXPECT_GT(m.scores[i], m.scores[target]);
    }
}

TEST(ScoreMap2DTest, ExpandReplicatesPatches) {
  const PatchGrid g = PatchGrid::make(2, 4, 32);
  ScoreMap2D m{g, {0, 1, 2, 3, 4, 5, 6, 7}};
  const auto px = m.expand();
  ASSERT_EQ(px.size(), 32u * 64u);
  EXPECT_EQ(px[0], 0.0);
  EXPECT_EQ(px[17 * 64 + 63], 7.0);
  EXPECT_EQ(px[5 * 64 + 20], 1.0);
}

TEST(ScoreMap3DTest, SingleMatchingViewScoresOne) {
  const auto& scene = test::unchanged_scene();
  const SyntheticView view = render_view(scene.reference, scene.queries[0].pose, 512);
  const PatchHistograms q = compute_histograms(view.image, kGrid);
  const ScoreMap3D m = build_3d_scoremap(scene.reference, std::span(&view, 1), q);
  std::size_t observed = 0;
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    if (m.counts[i] == 0) {
      EXPECT_EQ(m.scores[i], kUnobservedPointScore);
      continue;
    }
    ++observed;
    EXPECT_NEAR(m.scores[i], 1.0, 1e-12);
  }
  EXPECT_GT(observed, 1000u);
}

TEST(ScoreMap3DTest, MeanOverVisibleViews) {
  const PatchGrid g = PatchGrid::make(2, 4, 32);
  PatchHistograms q;
  q.grid = g;
  q.bins = 2;
  q.data.assign(8 * 6, 0.0);
  q.valid_count.assign(8, 0);
  ScoreMap3DAccumulator acc(3, q);
  const std::vector<double> s{0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.9};
  const std::vector<double> t{0.6, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.3};
  // point 0 sits in patch 0 in both views; point 1 in patch 7 in the first only; point 2 never.
  const std::vector<std::int32_t> pp1{0, 31 * 64 + 63, -1}, pp2{64 + 1, -1, -1};
  acc.add_view(pp1, s);
  acc.add_view(pp2, t);
  const ScoreMap3D m = acc.finish();
  EXPECT_DOUBLE_EQ(m.scores[0], (0.2 + 0.6) / 2);
  EXPECT_DOUBLE_EQ(m.scores[1], 0.9);
  EXPECT_EQ(m.scores[2], kUnobservedPointScore);
  EXPECT_EQ(m.counts, (std::vector<std::int32_t>{2, 1, 0}));
}

TEST(ScoreMap3DTest, ViewOrderDoesNotMatter) {
  const auto& scene = test::unchanged_scene();
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  std::vector<SyntheticView> views;
  for (const Pose& p : nearby_poses(scene.queries[0].pose)) views.push_back(render_view(scene.reference, p, 512));
  const ScoreMap3D a = build_3d_scoremap(scene.reference, views, q);
  std::reverse(views.begin(), views.end());
  std::swap(views[0], views[2]);
  const ScoreMap3D b = build_3d_scoremap(scene.reference, views, q);
  ASSERT_EQ(a.counts, b.counts);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    ASSERT_NEAR(a.scores[i], b.scores[i], 1e-15);
    ASSERT_GE(a.scores[i], 0.0);
    ASSERT_LE(a.scores[i], 1.0 + 1e-12);
  }
}

TEST(ScoreMap3DTest, RecoloredPointsScoreLower) {
  SceneSpec spec = test::unchanged_spec(1);
  spec.changes.push_back(change::RecolorFraction{0.3});
  const GeneratedScene scene = generate_scene(spec, 21);
  const PatchHistograms q = compute_histograms(scene.queries[0].image, kGrid);
  std::vector<SyntheticView> views;
  for (const Pose& p : nearby_poses(scene.queries[0].pose)) views.push_back(render_view(scene.reference, p, 512));
  const ScoreMap3D m = build_3d_scoremap(scene.reference, views, q);
  double sum[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < m.scores.size(); ++i) {
    if (m.counts[i] == 0) continue;
    sum[scene.changed_mask[i]] += m.scores[i];
    ++n[scene.changed_mask[i]];
  }
  ASSERT_GT(n[0], 0u);
  ASSERT_GT(n[1], 0u);
  EXPECT_LT(sum[1] / n[1], sum[0] / n[0]);
}
