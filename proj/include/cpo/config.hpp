#pragma once

// Pipeline settings and their flat `key = value` text form.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/histogram.hpp"
#include "cpo/refine.hpp"
#include "cpo/search.hpp"

namespace cpo {

struct PipelineConfig {
  int image_height = 512;
  int grid_rows = kDefaultGridRows;
  int grid_cols = kDefaultGridCols;
  int bins = kDefaultBins;
  std::size_t translations = 50;      // N_t
  std::size_t rotations = 256;        // N_r
  std::size_t candidates = 5;         // K
  std::size_t translation_filter = 0; // N_f, 0 disables the filter
  PartitionMode partition = PartitionMode::Octree;
  int partition_depth = 5;
  double cell_edge = 1.0;
  std::optional<HeightRange> heights;
  std::size_t scoremap_rotations = 8; // top-R rotations per translation in the score-map view set
  int splat_radius = kDefaultSplatRadius;
  int color_bins = 256;
  // Points scored per candidate when ranking by sampling loss.
  std::size_t loss_rank_points = 2000;
  RefineConfig refine;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency

  bool color_match = true;
  bool use_2d_map = true;
  bool use_3d_map = true;
  bool histogram_init = true;

  bool operator==(const PipelineConfig&) const = default;

  PatchGrid grid() const { return PatchGrid::make(grid_rows, grid_cols, image_height); }

  void check() const {
    if (image_height < 32) throw ConfigError("height must be at least 32");
    if (grid_rows < 1 || grid_cols < 1) throw ConfigError("grid dimensions must be positive");
    if (bins < 1 || color_bins < 1) throw ConfigError("bin counts must be positive");
    if (translations < 1) throw ConfigError("translations must be at least 1");
    if (rotations < 1) throw ConfigError("rotations must be at least 1");
    if (candidates < 1) throw ConfigError("candidates (K) must be at least 1");
    if (scoremap_rotations < 1) throw ConfigError("scoremap_rotations must be at least 1");
    if (loss_rank_points < 1) throw ConfigError("loss_rank_points must be at least 1");
    if (partition_depth < 0) throw ConfigError("partition_depth must be non-negative");
    if (!(cell_edge > 0.0)) throw ConfigError("cell_edge must be positive");
    if (splat_radius < 0) throw ConfigError("splat_radius must be non-negative");
    if (threads < 0) throw ConfigError("threads must be non-negative");
    if (heights && !(heights->min <= heights->max)) throw ConfigError("height range is empty");
    refine.check();
    grid().check();
  }
};

namespace config_detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  std::string rest;
  if (!in || (in >> rest)) throw ConfigError("bad value for " + key + ": '" + text + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (text.find('-') != std::string::npos) throw ConfigError("negative value for " + key);
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

// Every recognized key. CLI flags use the same names.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto integer = [&](const char* name, const char* help, int PipelineConfig::*field) {
      k.push_back({name, help, [name, field](PipelineConfig& c, const std::string& v) {
                     c.*field = parse_number<int>(name, v);
                   }});
    };
    auto count = [&](const char* name, const char* help, std::size_t PipelineConfig::*field) {
      k.push_back({name, help, [name, field](PipelineConfig& c, const std::string& v) {
                     c.*field = parse_number<std::size_t>(name, v);
                   }});
    };
    auto flag = [&](const char* name, const char* help, bool PipelineConfig::*field) {
      k.push_back({name, help, [name, field](PipelineConfig& c, const std::string& v) {
                     c.*field = parse_bool(name, v);
                   }});
    };
    integer("height", "panorama height H used for rendering and histograms", &PipelineConfig::image_height);
    integer("grid_rows", "patch grid rows", &PipelineConfig::grid_rows);
    integer("grid_cols", "patch grid columns", &PipelineConfig::grid_cols);
    integer("bins", "histogram bins per channel", &PipelineConfig::bins);
    count("translations", "translation proposals N_t", &PipelineConfig::translations);
    count("rotations", "sampled rotations N_r", &PipelineConfig::rotations);
    count("candidates", "candidate poses K refined", &PipelineConfig::candidates);
    count("translation_filter", "keep the N_f best translations before rotation search (0 = off)",
          &PipelineConfig::translation_filter);
    k.push_back({"partition", "free-space partition: octree | grid", [](PipelineConfig& c, const std::string& v) {
                   if (v == "octree")
                     c.partition = PartitionMode::Octree;
                   else if (v == "grid")
                     c.partition = PartitionMode::UniformGrid;
                   else
                     throw ConfigError("partition must be octree or grid, got '" + v + "'");
                 }});
    integer("partition_depth", "maximum octree depth", &PipelineConfig::partition_depth);
    k.push_back({"cell_edge", "uniform grid cell edge (m)", [](PipelineConfig& c, const std::string& v) {
                   c.cell_edge = parse_number<double>("cell_edge", v);
                 }});
    k.push_back({"min_camera_z", "lowest translation proposal height (m)", [](PipelineConfig& c, const std::string& v) {
                   if (!c.heights) c.heights = HeightRange{};
                   c.heights->min = parse_number<double>("min_camera_z", v);
                 }});
    k.push_back({"max_camera_z", "highest translation proposal height (m)", [](PipelineConfig& c, const std::string& v) {
                   if (!c.heights) c.heights = HeightRange{};
                   c.heights->max = parse_number<double>("max_camera_z", v);
                 }});
    count("scoremap_rotations", "top rotations per translation used as score-map views",
          &PipelineConfig::scoremap_rotations);
    integer("splat_radius", "point splat radius in pixels", &PipelineConfig::splat_radius);
    integer("color_bins", "bins of the color-matching CDFs", &PipelineConfig::color_bins);
    count("loss_rank_points", "points per candidate when ranking by sampling loss",
          &PipelineConfig::loss_rank_points);
    k.push_back({"refine_iterations", "refinement iterations", [](PipelineConfig& c, const std::string& v) {
                   c.refine.iterations = parse_number<int>("refine_iterations", v);
                 }});
    k.push_back({"refine_step", "refinement step size", [](PipelineConfig& c, const std::string& v) {
                   c.refine.step_size = parse_number<double>("refine_step", v);
                 }});
    k.push_back({"refine_final_step_scale", "final step size as a fraction of refine_step",
                 [](PipelineConfig& c, const std::string& v) {
                   c.refine.final_step_scale = parse_number<double>("refine_final_step_scale", v);
                 }});
    k.push_back({"refine_beta1", "Adam first-moment decay", [](PipelineConfig& c, const std::string& v) {
                   c.refine.adam_beta1 = parse_number<double>("refine_beta1", v);
                 }});
    k.push_back({"refine_beta2", "Adam second-moment decay", [](PipelineConfig& c, const std::string& v) {
                   c.refine.adam_beta2 = parse_number<double>("refine_beta2", v);
                 }});
    k.push_back({"refine_epsilon", "Adam epsilon", [](PipelineConfig& c, const std::string& v) {
                   c.refine.adam_epsilon = parse_number<double>("refine_epsilon", v);
                 }});
    k.push_back({"refine_points", "points subsampled per refinement", [](PipelineConfig& c, const std::string& v) {
                   c.refine.point_budget = parse_number<std::size_t>("refine_points", v);
                 }});
    k.push_back({"seed", "random seed", [](PipelineConfig& c, const std::string& v) {
                   c.seed = parse_number<std::uint64_t>("seed", v);
                 }});
    integer("threads", "worker thread cap (0 = all cores)", &PipelineConfig::threads);
    flag("color_match", "match query colors to the cloud", &PipelineConfig::color_match);
    flag("2d_map", "weight patches with the 2D score map", &PipelineConfig::use_2d_map);
    flag("3d_map", "weight points with the 3D score map", &PipelineConfig::use_3d_map);
    flag("histogram_init", "rank candidates by histogram intersection", &PipelineConfig::histogram_init);
    return k;
  }();
  return keys;
}

inline void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// Applies `key = value` lines on top of `base`. Later lines win.
inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  using config_detail::trim;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing value for " + key);
    set_config_value(base, key, value);
  }
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace cpo
