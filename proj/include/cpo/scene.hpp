#pragma once

// Synthetic test scenes: a textured box room with furniture, an optionally
// changed copy of it, and ground-truth query panoramas ray cast against the
// changed analytic surfaces.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"
#include "cpo/parallel.hpp"
#include "cpo/random.hpp"
#include "cpo/types.hpp"

namespace cpo {

namespace change {
// Points inside the box get a fresh, unrelated texture.
struct RecolorBox {
  AlignedBox box;
};
// Recolors the slab of lowest x holding `fraction` of the points.
struct RecolorFraction {
  double fraction = 0.3;
};
struct DeleteBox {
  AlignedBox box;
};
// c' = clamp(gain * c + offset), applied to every point.
struct ColorShift {
  Vec3 gain = Vec3::Ones();
  Vec3 offset = Vec3::Zero();
};
}  // namespace change

using SceneChange = std::variant<change::RecolorBox, change::RecolorFraction, change::DeleteBox, change::ColorShift>;

struct SceneSpec {
  Vec3 room = Vec3(6.0, 8.0, 3.0);
  double density = 600.0;  // points per square meter
  std::uint64_t texture_seed = 1;
  int furniture = 4;
  std::vector<SceneChange> changes;
  int query_count = 20;
  int query_height = 512;
  double query_tilt_deg = 10.0;
  double query_min_z = 1.0;
  double query_max_z = 2.0;
  double wall_margin = 0.6;
  double clearance = 0.4;
  // Octaves of the solid noise texture, coarse to fine (meters, amplitude).
  // Slow variation keeps patch color statistics distinctive across the room;
  // the fine grain keeps them stable when a patch window shifts.
  std::array<double, 4> texture_scales = {5.0, 2.5, 0.1, 0.05};
  std::array<double, 4> texture_amps = {0.35, 0.10, 0.15, 0.15};
  double texture_base_spread = 0.5;
};

struct GroundTruthQuery {
  Pose pose;
  Panorama image;
};

struct GeneratedScene {
  PointCloud reference;
  PointCloud changed;
  // Per reference point: 1 when a region change (recolor/delete) touched it.
  std::vector<std::uint8_t> changed_mask;
  std::vector<GroundTruthQuery> queries;
};

namespace scene_detail {

inline double hash01(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(x) * 73856093ULL ^
                                       static_cast<std::uint64_t>(y) * 19349663ULL ^
                                       static_cast<std::uint64_t>(z) * 83492791ULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Value noise in [-1, 1] on the integer lattice with quintic blending.
inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const Eigen::Vector3d f = p.array().floor();
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  const double tx = fade(p.x() - f.x());
  const double ty = fade(p.y() - f.y());
  const double tz = fade(p.z() - f.z());
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * (2.0 * hash01(ix + dx, iy + dy, iz + dz, seed) - 1.0);
      }
  return acc;
}

// Smooth solid texture: per-surface base color plus multi-octave noise.
struct Texture {
  std::uint64_t seed = 0;
  std::array<double, 4> scales = {2.5, 1.2, 0.6, 0.3};
  std::array<double, 4> amps = {0.30, 0.18, 0.09, 0.04};
  double base_spread = 0.5;

  Color operator()(const Vec3& p, int surface) const {
    Color c;
    for (int ch = 0; ch < 3; ++ch) {
      const std::uint64_t s = mix_seed(seed, 16 * static_cast<std::uint64_t>(surface) + ch);
      double v = 0.5 + base_spread * (hash01(surface, ch, 0, seed) - 0.5);
      for (std::size_t k = 0; k < scales.size(); ++k)
        v += amps[k] * value_noise(p / scales[k] + Vec3(17.0 * k, 31.0 * k, 7.0 * k), s + k);
      c[ch] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
    return c;
  }
};

struct Surface {
  Vec3 origin;
  Vec3 edge_a;
  Vec3 edge_b;
  int id;
};

// Jittered-grid samples on a parallelogram.
inline void sample_surface(const Surface& s, double density, Rng& rng, std::vector<Vec3>& out,
                           std::vector<int>& ids) {
  const double la = s.edge_a.norm();
  const double lb = s.edge_b.norm();
  const double spacing = 1.0 / std::sqrt(density);
  const int na = std::max(1, static_cast<int>(std::ceil(la / spacing)));
  const int nb = std::max(1, static_cast<int>(std::ceil(lb / spacing)));
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const double a = (i + rng.uniform()) / na;
      const double b = (j + rng.uniform()) / nb;
      out.push_back(s.origin + a * s.edge_a + b * s.edge_b);
      ids.push_back(s.id);
    }
  }
}

inline void add_box_faces(const AlignedBox& b, int first_id, bool with_bottom, std::vector<Surface>& out) {
  const Vec3 d = b.max - b.min;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  out.push_back({b.min, ex, ey, first_id + 0});                 // bottom
  out.push_back({b.min + ez, ex, ey, first_id + 1});            // top
  out.push_back({b.min, ex, ez, first_id + 2});                 // y = min
  out.push_back({b.min + ey, ex, ez, first_id + 3});            // y = max
  out.push_back({b.min, ey, ez, first_id + 4});                 // x = min
  out.push_back({b.min + ex, ey, ez, first_id + 5});            // x = max
  if (!with_bottom) out.erase(out.end() - 6);
}

inline Mat3 query_rotation(Rng& rng, double tilt_deg) {
  const double yaw = rng.uniform(-kPi, kPi);
  const double tilt = deg_to_rad(tilt_deg);
  const double pitch = rng.uniform(-tilt, tilt);
  const double roll = rng.uniform(-tilt, tilt);
  const Mat3 cam_to_world =
      rotation_z(yaw) * exp_so3(Vec3(0.0, pitch, 0.0)) * exp_so3(Vec3(roll, 0.0, 0.0));
  return cam_to_world.transpose();
}

// Fills holes by repeated 8-neighbor averaging of valid pixels.
inline void fill_holes(Panorama& pano) {
  const int h = pano.height();
  const int w = pano.width();
  bool any = true;
  while (any) {
    any = false;
    Panorama next = pano;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (pano.valid(r, c)) continue;
        Color acc = Color::Zero();
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          const int rr = r + dr;
          if (rr < 0 || rr >= h) continue;
          for (int dc = -1; dc <= 1; ++dc) {
            const int cc = (c + dc + w) % w;
            if (pano.valid(rr, cc)) {
              acc += pano.color(rr, cc);
              ++n;
            }
          }
        }
        if (n > 0) {
          next.set_color(r, c, acc / n);
          next.set_valid(r, c, true);
          any = true;
        }
      }
    }
    pano = std::move(next);
  }
}

}  // namespace scene_detail

inline void validate(const SceneSpec& spec) {
  if ((spec.room.array() <= 0.0).any()) throw InvalidSpec("room extents must be positive");
  if (!(spec.density > 0.0)) throw InvalidSpec("density must be positive");
  if (spec.furniture < 0) throw InvalidSpec("furniture count must be non-negative");
  if (spec.query_count < 0) throw InvalidSpec("query count must be non-negative");
  if (spec.query_height < 32) throw InvalidSpec("query height must be at least 32");
  if (spec.query_min_z > spec.query_max_z) throw InvalidSpec("query height range is empty");
  if (spec.clearance < 0.2) throw InvalidSpec("camera clearance must be at least 0.2 m");
  if (2.0 * spec.wall_margin >= std::min(spec.room.x(), spec.room.y()))
    throw InvalidSpec("wall margin leaves no room for cameras");
  for (const auto& c : spec.changes) {
    if (const auto* f = std::get_if<change::RecolorFraction>(&c)) {
      if (!(f->fraction >= 0.0 && f->fraction <= 1.0)) throw InvalidSpec("recolor fraction must be in [0,1]");
    }
  }
}

namespace scene_detail {

// Changes resolved against the reference cloud, applied in recipe order.
class ChangeModel {
 public:
  ChangeModel(const SceneSpec& spec, const std::vector<Vec3>& reference_positions)
      : other_{mix_seed(spec.texture_seed, 0xC0FFEE), spec.texture_scales, spec.texture_amps,
               spec.texture_base_spread} {
    for (const auto& c : spec.changes) {
      if (const auto* rf = std::get_if<change::RecolorFraction>(&c)) {
        const std::size_t n = reference_positions.size();
        const auto count = static_cast<std::size_t>(std::llround(rf->fraction * n));
        double cut = -std::numeric_limits<double>::infinity();
        if (count > 0) {
          std::vector<double> xs(n);
          for (std::size_t i = 0; i < n; ++i) xs[i] = reference_positions[i].x();
          std::nth_element(xs.begin(), xs.begin() + (count - 1), xs.end());
          cut = xs[count - 1];
        }
        AlignedBox slab;
        slab.min = Vec3::Constant(-std::numeric_limits<double>::infinity());
        slab.max = Vec3::Constant(std::numeric_limits<double>::infinity());
        slab.max.x() = cut;
        steps_.push_back(change::RecolorBox{slab});
      } else {
        steps_.push_back(c);
      }
    }
  }

  bool deleted(const Vec3& p) const {
    return std::any_of(steps_.begin(), steps_.end(), [&](const SceneChange& c) {
      const auto* db = std::get_if<change::DeleteBox>(&c);
      return db && db->box.contains(p);
    });
  }

  // True when a region change (recolor or delete) touches p.
  bool touched(const Vec3& p) const {
    return std::any_of(steps_.begin(), steps_.end(), [&](const SceneChange& c) {
      if (const auto* rb = std::get_if<change::RecolorBox>(&c)) return rb->box.contains(p);
      if (const auto* db = std::get_if<change::DeleteBox>(&c)) return db->box.contains(p);
      return false;
    });
  }

  Color color(const Vec3& p, int surface, Color base) const {
    for (const auto& c : steps_) {
      if (const auto* rb = std::get_if<change::RecolorBox>(&c)) {
        if (rb->box.contains(p)) base = other_(p, surface);
      } else if (const auto* cs = std::get_if<change::ColorShift>(&c)) {
        for (int k = 0; k < 3; ++k)
          base[k] = std::round(std::clamp(cs->gain[k] * base[k] + cs->offset[k], 0.0, 1.0) * 255.0) / 255.0;
      }
    }
    return base;
  }

 private:
  Texture other_;
  std::vector<SceneChange> steps_;
};

// Ideal pinhole panorama of the analytic scene: one ray per pixel center,
// nearest present surface wins. Pixels whose ray escapes stay invalid.
inline Panorama raycast_panorama(const std::vector<Surface>& surfaces, const Pose& pose, int height,
                                 const std::function<bool(const Vec3&, int)>& present,
                                 const std::function<Color(const Vec3&, int)>& shade) {
  const int width = 2 * height;
  Panorama image(height, width);
  const Vec3 origin = pose.center();
  const Mat3 cam_to_world = pose.rotation.transpose();
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Vec3 dir = cam_to_world * unproject({static_cast<double>(c), static_cast<double>(r)}, height, width);
      double best_t = std::numeric_limits<double>::infinity();
      int best = -1;
      for (std::size_t s = 0; s < surfaces.size(); ++s) {
        const Surface& f = surfaces[s];
        const Vec3 normal = f.edge_a.cross(f.edge_b);
        const double denom = normal.dot(dir);
        if (std::abs(denom) < 1e-15) continue;
        const double t = normal.dot(f.origin - origin) / denom;
        if (!(t > 1e-9) || t >= best_t) continue;
        const Vec3 local = origin + t * dir - f.origin;
        const double a = local.dot(f.edge_a) / f.edge_a.squaredNorm();
        const double b = local.dot(f.edge_b) / f.edge_b.squaredNorm();
        if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) continue;
        if (!present(origin + t * dir, f.id)) continue;
        best_t = t;
        best = static_cast<int>(s);
      }
      if (best < 0) continue;
      image.set_color(r, c, shade(origin + best_t * dir, surfaces[best].id));
      image.set_valid(r, c, true);
    }
  }
  return image;
}

}  // namespace scene_detail

inline GeneratedScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  using namespace scene_detail;
  validate(spec);
  Rng rng(mix_seed(seed, 1));

  std::vector<Surface> surfaces;
  add_box_faces({Vec3::Zero(), spec.room}, 0, true, surfaces);

  std::vector<AlignedBox> furniture;
  for (int f = 0; f < spec.furniture; ++f) {
    const Vec3 size(rng.uniform(0.5, 1.2), rng.uniform(0.5, 1.2), rng.uniform(0.4, 1.1));
    const double x = rng.uniform(0.1, std::max(0.1, spec.room.x() - size.x() - 0.1));
    const double y = rng.uniform(0.1, std::max(0.1, spec.room.y() - size.y() - 0.1));
    AlignedBox b{Vec3(x, y, 0.0), Vec3(x, y, 0.0) + size.cwiseMin(spec.room)};
    furniture.push_back(b);
    add_box_faces(b, 6 + 6 * f, false, surfaces);
  }

  // Floor hidden under furniture is never seen; leave it out.
  auto present = [&](const Vec3& p, int id) {
    if (id != 0) return true;
    return std::none_of(furniture.begin(), furniture.end(), [&](const AlignedBox& b) {
      return p.x() > b.min.x() && p.x() < b.max.x() && p.y() > b.min.y() && p.y() < b.max.y();
    });
  };

  std::vector<Vec3> positions;
  std::vector<int> ids;
  for (const auto& s : surfaces) sample_surface(s, spec.density, rng, positions, ids);

  const Texture texture{spec.texture_seed, spec.texture_scales, spec.texture_amps, spec.texture_base_spread};
  GeneratedScene out;
  std::vector<int> point_ids;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!present(positions[i], ids[i])) continue;
    out.reference.push_back(positions[i], texture(positions[i], ids[i]));
    point_ids.push_back(ids[i]);
  }

  const ChangeModel changes(spec, out.reference.positions);
  const std::size_t n = out.reference.size();
  out.changed_mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = out.reference.positions[i];
    out.changed_mask[i] = changes.touched(p) ? 1 : 0;
    if (!changes.deleted(p)) out.changed.push_back(p, changes.color(p, point_ids[i], out.reference.colors[i]));
  }

  // Ground-truth cameras in free space, imaging the changed scene.
  auto present_after = [&](const Vec3& p, int id) { return present(p, id) && !changes.deleted(p); };
  auto shade = [&](const Vec3& p, int id) { return changes.color(p, id, texture(p, id)); };
  Rng qrng(mix_seed(seed, 2));
  const double clearance2 = spec.clearance * spec.clearance;
  std::vector<Pose> poses;
  for (int q = 0; q < spec.query_count; ++q) {
    Vec3 center;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw InvalidSpec("could not place a query camera in free space");
      center = Vec3(qrng.uniform(spec.wall_margin, spec.room.x() - spec.wall_margin),
                    qrng.uniform(spec.wall_margin, spec.room.y() - spec.wall_margin),
                    qrng.uniform(spec.query_min_z, spec.query_max_z));
      const bool inside = std::any_of(furniture.begin(), furniture.end(), [&](const AlignedBox& b) {
        return (center.array() > b.min.array() - spec.clearance).all() &&
               (center.array() < b.max.array() + spec.clearance).all();
      });
      if (inside) continue;
      const bool clear = std::none_of(out.changed.positions.begin(), out.changed.positions.end(),
                                      [&](const Vec3& p) { return (p - center).squaredNorm() < clearance2; });
      if (clear) break;
    }
    poses.push_back(Pose::from_center(query_rotation(qrng, spec.query_tilt_deg), center));
  }
  out.queries.resize(poses.size());
  parallel_for(poses.size(), [&](std::size_t q) {
    Panorama image = raycast_panorama(surfaces, poses[q], spec.query_height, present_after, shade);
    fill_holes(image);
    out.queries[q] = {poses[q], std::move(image)};
  });
  return out;
}

// Scene description file: `key = value` lines, `#` comments.
//   room = 6 8 3
//   density = 600
//   texture_seed = 7
//   furniture = 4
//   queries = 20
//   query_height = 512
//   query_tilt_deg = 10
//   change = recolor_box x0 y0 z0 x1 y1 z1
//   change = recolor_fraction 0.3
//   change = delete_box x0 y0 z0 x1 y1 z1
//   change = color_shift gain offset            (same for all channels)
//   change = color_shift gr gg gb or og ob      (per channel)
inline SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw InvalidSpec("scene spec line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) fail("expected key = value");
      continue;
    }
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream vs(line.substr(eq + 1));
    auto read_vec = [&](int count) {
      std::vector<double> v(count);
      for (auto& x : v)
        if (!(vs >> x)) fail("expected " + std::to_string(count) + " numbers for " + key);
      return v;
    };
    auto read_box = [&] {
      const auto v = read_vec(6);
      AlignedBox b{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
      if ((b.max.array() < b.min.array()).any()) fail("box max below min");
      return b;
    };
    if (key == "room") {
      const auto v = read_vec(3);
      spec.room = Vec3(v[0], v[1], v[2]);
    } else if (key == "density") {
      spec.density = read_vec(1)[0];
    } else if (key == "texture_seed") {
      const double s = read_vec(1)[0];
      if (s < 0) fail("texture_seed must be non-negative");
      spec.texture_seed = static_cast<std::uint64_t>(s);
    } else if (key == "furniture") {
      spec.furniture = static_cast<int>(read_vec(1)[0]);
    } else if (key == "queries") {
      spec.query_count = static_cast<int>(read_vec(1)[0]);
    } else if (key == "query_height") {
      spec.query_height = static_cast<int>(read_vec(1)[0]);
    } else if (key == "query_tilt_deg") {
      spec.query_tilt_deg = read_vec(1)[0];
    } else if (key == "query_z") {
      const auto v = read_vec(2);
      spec.query_min_z = v[0];
      spec.query_max_z = v[1];
    } else if (key == "change") {
      std::string kind;
      vs >> kind;
      if (kind == "recolor_box") {
        spec.changes.push_back(change::RecolorBox{read_box()});
      } else if (kind == "recolor_fraction") {
        spec.changes.push_back(change::RecolorFraction{read_vec(1)[0]});
      } else if (kind == "delete_box") {
        spec.changes.push_back(change::DeleteBox{read_box()});
      } else if (kind == "color_shift") {
        std::vector<double> v;
        double x;
        while (vs >> x) v.push_back(x);
        if (v.size() == 2) {
          spec.changes.push_back(change::ColorShift{Vec3::Constant(v[0]), Vec3::Constant(v[1])});
        } else if (v.size() == 6) {
          spec.changes.push_back(change::ColorShift{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])});
        } else {
          fail("color_shift takes 2 or 6 numbers");
        }
      } else {
        fail("unknown change kind '" + kind + "'");
      }
    } else {
      fail("unknown key '" + key + "'");
    }
    std::string rest;
    if (key != "change" && (vs >> rest)) fail("trailing tokens after " + key);
  }
  validate(spec);
  return spec;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene spec: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

}  // namespace cpo
