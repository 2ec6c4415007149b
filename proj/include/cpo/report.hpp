#pragma once

// Report serialization, accuracy summaries, score-map dumps and the
// histogram timing benchmark.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/histogram.hpp"
#include "cpo/io/ply.hpp"
#include "cpo/io/png.hpp"
#include "cpo/pipeline.hpp"
#include "cpo/render.hpp"

namespace cpo {

using Json = nlohmann::json;

// Pose as {"rotation": row-major 3x3, "translation": 3-vector}.
inline Json pose_to_json(const Pose& p) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
  return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline Pose pose_from_json(const Json& j) {
  try {
    const auto& rot = j.at("rotation");
    const auto& tr = j.at("translation");
    if (rot.size() != 9 || tr.size() != 3) throw ParseError("pose needs 9 rotation and 3 translation values");
    Pose p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot.at(3 * r + c).get<double>();
    for (int k = 0; k < 3; ++k) p.translation[k] = tr.at(k).get<double>();
    if (!p.rotation.allFinite() || !p.translation.allFinite()) throw ParseError("pose has non-finite values");
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed pose: ") + e.what());
  }
}

inline Json report_to_json(const LocalizationReport& r, bool with_timings = true) {
  Json j;
  j["pose"] = pose_to_json(r.pose);
  j["final_loss"] = r.final_loss;
  j["selected_candidate"] = r.selected_candidate;
  j["translations_truncated"] = r.translations_truncated;
  Json cands = Json::array();
  for (const auto& c : r.candidates) {
    Json jc;
    jc["initial_pose"] = pose_to_json(c.initial_pose);
    jc["translation_index"] = c.translation_index;
    jc["rotation_index"] = c.rotation_index;
    jc["weighted_score"] = c.weighted_score;
    jc["rank_loss"] = c.rank_loss ? Json(*c.rank_loss) : Json(nullptr);
    jc["refined_pose"] = pose_to_json(c.refined_pose);
    jc["final_loss"] = c.final_loss;
    jc["converged"] = c.converged;
    jc["loss_trace"] = c.loss_trace;
    cands.push_back(std::move(jc));
  }
  j["candidates"] = std::move(cands);
  if (with_timings) {
    Json t = Json::array();
    for (const auto& s : r.timings_ms) t.push_back({{"stage", s.stage}, {"ms", s.ms}});
    j["timings_ms"] = std::move(t);
  }
  if (r.ground_truth) {
    const auto& g = *r.ground_truth;
    j["ground_truth"] = {{"pose", pose_to_json(g.pose)},
                         {"translation_error", g.translation_error},
                         {"rotation_error_deg", g.rotation_error},
                         {"translation_threshold", g.translation_threshold},
                         {"rotation_threshold_deg", g.rotation_threshold},
                         {"translation_correct", g.translation_correct},
                         {"rotation_correct", g.rotation_correct},
                         {"correct", g.correct}};
  }
  return j;
}

inline LocalizationReport report_from_json(const Json& j) {
  try {
    LocalizationReport r;
    r.pose = pose_from_json(j.at("pose"));
    r.final_loss = j.at("final_loss").get<double>();
    r.selected_candidate = j.at("selected_candidate").get<std::size_t>();
    r.translations_truncated = j.value("translations_truncated", false);
    for (const auto& jc : j.at("candidates")) {
      CandidateReport c;
      c.initial_pose = pose_from_json(jc.at("initial_pose"));
      c.translation_index = jc.at("translation_index").get<std::size_t>();
      c.rotation_index = jc.at("rotation_index").get<std::size_t>();
      c.weighted_score = jc.at("weighted_score").get<double>();
      if (jc.contains("rank_loss") && !jc.at("rank_loss").is_null()) c.rank_loss = jc.at("rank_loss").get<double>();
      c.refined_pose = pose_from_json(jc.at("refined_pose"));
      c.final_loss = jc.at("final_loss").get<double>();
      c.converged = jc.at("converged").get<bool>();
      c.loss_trace = jc.value("loss_trace", std::vector<double>{});
      r.candidates.push_back(std::move(c));
    }
    if (j.contains("timings_ms"))
      for (const auto& t : j.at("timings_ms")) r.timings_ms.push_back({t.at("stage").get<std::string>(), t.at("ms").get<double>()});
    if (j.contains("ground_truth")) {
      const auto& g = j.at("ground_truth");
      GroundTruthComparison c;
      c.pose = pose_from_json(g.at("pose"));
      c.translation_error = g.at("translation_error").get<double>();
      c.rotation_error = g.at("rotation_error_deg").get<double>();
      c.translation_threshold = g.at("translation_threshold").get<double>();
      c.rotation_threshold = g.at("rotation_threshold_deg").get<double>();
      c.translation_correct = g.at("translation_correct").get<bool>();
      c.rotation_correct = g.at("rotation_correct").get<bool>();
      c.correct = g.at("correct").get<bool>();
      r.ground_truth = c;
    }
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

inline Pose load_pose(const std::filesystem::path& path) { return pose_from_json(read_json(path)); }
inline void save_pose(const Pose& pose, const std::filesystem::path& path) {
  write_text(path, pose_to_json(pose).dump(2) + "\n");
}

inline LocalizationReport load_report(const std::filesystem::path& path) { return report_from_json(read_json(path)); }
inline void save_report(const LocalizationReport& r, const std::filesystem::path& path) {
  write_text(path, report_to_json(r).dump(2) + "\n");
}

struct EvaluationSummary {
  std::size_t count = 0;
  std::size_t correct = 0;
  double median_translation_error = 0.0;
  double median_rotation_error = 0.0;  // degrees
  double accuracy = 0.0;
  double translation_threshold = kDefaultTranslationThreshold;
  double rotation_threshold = kDefaultRotationThreshold;
};

// Lower-middle element for even counts.
inline double lower_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

inline EvaluationSummary evaluate(std::span<const LocalizationReport> reports,
                                  double tau_t = kDefaultTranslationThreshold,
                                  double tau_r = kDefaultRotationThreshold) {
  if (reports.empty()) throw EmptyInput("no reports to evaluate");
  EvaluationSummary s;
  s.count = reports.size();
  s.translation_threshold = tau_t;
  s.rotation_threshold = tau_r;
  std::vector<double> te;
  std::vector<double> re;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& g = reports[i].ground_truth;
    if (!g) throw MissingGroundTruth("report " + std::to_string(i) + " has no ground truth");
    te.push_back(g->translation_error);
    re.push_back(g->rotation_error);
    if (g->translation_error < tau_t && g->rotation_error < tau_r) ++s.correct;
  }
  s.median_translation_error = lower_median(te);
  s.median_rotation_error = lower_median(re);
  s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.count);
  return s;
}

inline Json summary_to_json(const EvaluationSummary& s) {
  return {{"count", s.count},
          {"correct", s.correct},
          {"accuracy", s.accuracy},
          {"median_translation_error", s.median_translation_error},
          {"median_rotation_error_deg", s.median_rotation_error},
          {"translation_threshold", s.translation_threshold},
          {"rotation_threshold_deg", s.rotation_threshold}};
}

// Black -> red -> yellow -> white.
inline Color heat_color(double s) {
  const double x = std::clamp(s, 0.0, 1.0) * 3.0;
  return {std::clamp(x, 0.0, 1.0), std::clamp(x - 1.0, 0.0, 1.0), std::clamp(x - 2.0, 0.0, 1.0)};
}

struct ScoreMapDump {
  std::filesystem::path heatmap;
  std::filesystem::path cloud;
  ScoreMaps maps;
};

inline std::filesystem::path prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (dir.empty()) throw IoError("output directory is empty");
  if (std::filesystem::exists(dir, ec) && !std::filesystem::is_directory(dir, ec))
    throw IoError(dir.string() + " is not a directory");
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  return dir;
}

// 2D map as a per-pixel heatmap PNG (bright = consistent with the cloud) and
// the 3D map as a grayscale PLY.
inline ScoreMapDump dump_scoremaps(const PointCloud& cloud, const Panorama& query, const PipelineConfig& config,
                                   const std::filesystem::path& out_dir) {
  prepare_output_dir(out_dir);
  set_max_threads(config.threads);
  const auto st = prepare_search(cloud, query, config);
  ScoreMapDump d;
  d.maps = build_score_maps(*st, cloud, config);

  const PatchGrid& g = d.maps.map2d.grid;
  const auto pixels = d.maps.map2d.expand();
  Panorama heat(g.height, g.width);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) {
      heat.set_color(r, c, heat_color(pixels[static_cast<std::size_t>(r) * g.width + c]));
      heat.set_valid(r, c, true);
    }
  d.heatmap = out_dir / "scoremap_2d.png";
  io::save_panorama(heat, d.heatmap);

  PointCloud gray;
  gray.positions = cloud.positions;
  gray.colors.reserve(cloud.size());
  for (const double s : d.maps.map3d.scores) gray.colors.push_back(Color::Constant(std::clamp(s, 0.0, 1.0)));
  d.cloud = out_dir / "scoremap_3d.ply";
  io::save_pointcloud(gray, d.cloud);
  return d;
}

struct BenchRow {
  std::string method;
  std::size_t views = 0;
  double total_ms = 0.0;
  double per_view_ms = 0.0;
};

inline const std::vector<std::string>& bench_methods() {
  static const std::vector<std::string> m = {"render", "fast"};
  return m;
}

// Per-view cost of producing patch histograms for `rotations` views around
// one translation: explicit render + histogram versus the fast path. The
// fast path is charged its cached render, histogram and table build.
inline std::vector<BenchRow> bench_histograms(const PointCloud& cloud, const PipelineConfig& config,
                                              std::span<const std::string> methods,
                                              std::size_t render_views = 16) {
  config.check();
  validate(cloud);
  for (const auto& m : methods)
    if (std::find(bench_methods().begin(), bench_methods().end(), m) == bench_methods().end())
      throw ConfigError("unknown bench method '" + m + "'");
  const PatchGrid grid = config.grid();
  const auto partition = build_partition(cloud, config.partition, config.partition_depth, config.cell_edge);
  const Vec3 center = propose_translations(partition, 1, config.heights).positions.front();
  const auto rotations = sample_rotations(config.rotations, mix_seed(config.seed, 1));
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  std::vector<BenchRow> rows;
  double sink = 0.0;
  for (const auto& m : methods) {
    BenchRow row;
    row.method = m;
    if (m == "render") {
      row.views = std::min(render_views, rotations.size());
      const auto t0 = clock::now();
      for (std::size_t r = 0; r < row.views; ++r) {
        const auto view = render_view(cloud, Pose::from_center(rotations[r], center), grid.height, config.splat_radius);
        sink += compute_histograms(view.image, grid, config.bins).data[0];
      }
      row.total_ms = ms(t0, clock::now());
    } else {
      row.views = rotations.size();
      const auto t0 = clock::now();
      const auto view = render_view(cloud, Pose::from_center(Mat3::Identity(), center), grid.height, config.splat_radius);
      const auto cached = compute_histograms(view.image, grid, config.bins);
      const auto table = precompute_rotation_tables(grid, relative_rotations(rotations));
      for (std::size_t r = 0; r < rotations.size(); ++r) sink += fast_rotated_histograms(cached, table, r).data[0];
      row.total_ms = ms(t0, clock::now());
    }
    row.per_view_ms = row.total_ms / static_cast<double>(row.views);
    rows.push_back(row);
  }
  if (sink < 0.0) rows.clear();  // keeps the work observable
  return rows;
}

}  // namespace cpo
