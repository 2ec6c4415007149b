// Command-line front end: localize, evaluate, gen-scene, dump-scoremaps, bench.
// Exit codes: 0 success, 1 bad input, 2 internal failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cpo/config.hpp"
#include "cpo/io/ply.hpp"
#include "cpo/io/png.hpp"
#include "cpo/pipeline.hpp"
#include "cpo/report.hpp"
#include "cpo/scene.hpp"

namespace fs = std::filesystem;

namespace {

// Config file plus per-key overrides and the ablation switches.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool no_2d = false;
  bool no_3d = false;
  bool no_hist = false;
  bool no_color = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
    for (const auto& key : cpo::config_keys()) {
      auto* slot = &overrides[key.name];
      app->add_option("--" + key.name, *slot, key.help)->group("Config overrides");
    }
    app->add_flag("--no-2d-map", no_2d, "uniform patch weights when ranking");
    app->add_flag("--no-3d-map", no_3d, "uniform point weights when refining");
    app->add_flag("--no-histogram-init", no_hist, "rank candidates by sampling loss");
    app->add_flag("--no-color-match", no_color, "use query colors as given");
  }

  cpo::PipelineConfig build() const {
    cpo::PipelineConfig c = config_path.empty() ? cpo::PipelineConfig{} : cpo::load_config(config_path);
    for (const auto& key : cpo::config_keys()) {
      const auto& v = overrides.at(key.name);
      if (!v.empty()) key.set(c, v);
    }
    if (no_2d) c.use_2d_map = false;
    if (no_3d) c.use_3d_map = false;
    if (no_hist) c.histogram_init = false;
    if (no_color) c.color_match = false;
    c.check();
    return c;
  }
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    cpo::write_text(out_path, text);
}

void write_loss_traces(const cpo::LocalizationReport& r, const std::string& path) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "candidate,iteration,loss\n";
  for (std::size_t k = 0; k < r.candidates.size(); ++k)
    for (std::size_t i = 0; i < r.candidates[k].loss_trace.size(); ++i)
      csv << k << ',' << i << ',' << r.candidates[k].loss_trace[i] << '\n';
  cpo::write_text(path, csv.str());
}

std::pair<double, double> parse_threshold(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw cpo::ConfigError("threshold must be T_METERS,R_DEGREES: " + text);
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw cpo::ConfigError("threshold must be T_METERS,R_DEGREES: " + text);
  }
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panorama localization against colored point clouds"};
  app.require_subcommand(1);

  // localize
  auto* loc = app.add_subcommand("localize", "estimate the pose of a panorama in a point cloud");
  std::string cloud_path, pano_path, gt_path, out_path, trace_path;
  ConfigOptions loc_cfg;
  loc->add_option("--cloud", cloud_path, "reference point cloud (.ply)")->required();
  loc->add_option("--pano", pano_path, "query panorama (.png, W = 2H)")->required();
  loc->add_option("--gt-pose", gt_path, "ground-truth pose JSON; adds errors to the report");
  loc->add_option("--out", out_path, "report JSON (default: stdout)");
  loc->add_option("--loss-trace", trace_path, "per-iteration refinement losses as CSV");
  loc_cfg.attach(loc);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "summarize reports that carry ground truth");
  std::vector<std::string> report_paths;
  std::vector<std::string> thresholds;
  std::string eval_out;
  eval->add_option("reports", report_paths, "report JSON files")->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", thresholds, "T_METERS,R_DEGREES (repeatable; default 0.05,5)");
  eval->add_option("--out", eval_out, "summary JSON (default: stdout)");

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "write a synthetic room, its changed copy and query panoramas");
  std::string spec_path, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--spec", spec_path, "scene description file (default: built-in room)");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "scene seed");

  // dump-scoremaps
  auto* dump = app.add_subcommand("dump-scoremaps", "write the 2D score map heatmap and 3D score map cloud");
  std::string dump_cloud, dump_pano, dump_out;
  ConfigOptions dump_cfg;
  dump->add_option("--cloud", dump_cloud, "reference point cloud (.ply)")->required();
  dump->add_option("--pano", dump_pano, "query panorama (.png)")->required();
  dump->add_option("--out", dump_out, "output directory")->required();
  dump_cfg.attach(dump);

  // bench
  auto* bench = app.add_subcommand("bench", "per-view histogram cost: explicit render vs. fast path");
  std::string bench_cloud, bench_out;
  std::vector<std::string> methods = cpo::bench_methods();
  std::size_t render_views = 16;
  ConfigOptions bench_cfg;
  bench->add_option("--cloud", bench_cloud, "point cloud (default: built-in synthetic room)");
  bench->add_option("--methods", methods, "subset of: render fast")->delimiter(',');
  bench->add_option("--render-views", render_views, "views timed on the render path");
  bench->add_option("--out", bench_out, "timing table JSON (default: stdout)");
  bench_cfg.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (loc->parsed()) {
      const cpo::PipelineConfig config = loc_cfg.build();
      const cpo::PointCloud cloud = cpo::io::load_pointcloud(cloud_path);
      const cpo::Panorama query = cpo::io::load_panorama(pano_path);
      std::optional<cpo::Pose> gt;
      if (!gt_path.empty()) gt = cpo::load_pose(gt_path);
      cpo::LocalizationReport report = cpo::localize(cloud, query, config);
      if (gt) report.ground_truth = cpo::compare_to_ground_truth(report.pose, *gt);
      emit(cpo::report_to_json(report).dump(2) + "\n", out_path);
      if (!trace_path.empty()) write_loss_traces(report, trace_path);
    } else if (eval->parsed()) {
      std::vector<cpo::LocalizationReport> reports;
      for (const auto& p : report_paths) reports.push_back(cpo::load_report(p));
      if (thresholds.empty()) thresholds.push_back("0.05,5");
      cpo::Json out = cpo::Json::array();
      for (const auto& t : thresholds) {
        const auto [tau_t, tau_r] = parse_threshold(t);
        out.push_back(cpo::summary_to_json(cpo::evaluate(reports, tau_t, tau_r)));
      }
      emit(out.dump(2) + "\n", eval_out);
    } else if (gen->parsed()) {
      const cpo::SceneSpec spec = spec_path.empty() ? cpo::SceneSpec{} : cpo::load_scene_spec(spec_path);
      const fs::path dir = cpo::prepare_output_dir(gen_out);
      const cpo::GeneratedScene scene = cpo::generate_scene(spec, gen_seed);
      cpo::io::save_pointcloud(scene.reference, dir / "reference.ply");
      cpo::io::save_pointcloud(scene.changed, dir / "changed.ply");
      std::string mask;
      mask.reserve(2 * scene.changed_mask.size());
      for (const auto m : scene.changed_mask) {
        mask += m ? '1' : '0';
        mask += '\n';
      }
      cpo::write_text(dir / "changed_mask.txt", mask);
      for (std::size_t q = 0; q < scene.queries.size(); ++q) {
        const std::string stem = "query_" + zero_pad(static_cast<int>(q), 3);
        cpo::io::save_panorama(scene.queries[q].image, dir / (stem + ".png"));
        cpo::save_pose(scene.queries[q].pose, dir / (stem + "_pose.json"));
      }
      std::cout << "wrote " << scene.reference.size() << " points and " << scene.queries.size()
                << " queries to " << dir.string() << "\n";
    } else if (dump->parsed()) {
      const cpo::PipelineConfig config = dump_cfg.build();
      const auto d = cpo::dump_scoremaps(cpo::io::load_pointcloud(dump_cloud), cpo::io::load_panorama(dump_pano),
                                         config, dump_out);
      std::cout << d.heatmap.string() << "\n" << d.cloud.string() << "\n";
    } else if (bench->parsed()) {
      const cpo::PipelineConfig config = bench_cfg.build();
      cpo::PointCloud cloud;
      if (bench_cloud.empty()) {
        cpo::SceneSpec spec;
        spec.query_count = 0;
        cloud = cpo::generate_scene(spec, config.seed).reference;
      } else {
        cloud = cpo::io::load_pointcloud(bench_cloud);
      }
      const auto rows = cpo::bench_histograms(cloud, config, methods, render_views);
      cpo::Json out = cpo::Json::array();
      for (const auto& r : rows)
        out.push_back({{"method", r.method}, {"views", r.views}, {"total_ms", r.total_ms}, {"per_view_ms", r.per_view_ms}});
      emit(out.dump(2) + "\n", bench_out);
    }
  } catch (const cpo::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
