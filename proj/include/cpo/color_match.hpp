#pragma once

// Global color transfer from the query panorama onto the point cloud's color
// distribution: per-channel monotone CDF matching, which is the 1-D optimal
// transport map between the two marginals.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/types.hpp"

namespace cpo {

struct ColorMap {
  // tables[channel][bin]: output value for inputs falling in `bin`.
  std::array<std::vector<double>, 3> tables;

  int size() const { return static_cast<int>(tables[0].size()); }

  static ColorMap identity(int bins = 256) {
    ColorMap m;
    for (auto& t : m.tables) {
      t.resize(bins);
      for (int b = 0; b < bins; ++b) t[b] = (b + 0.5) / bins;
    }
    return m;
  }

  double apply(int channel, double v) const {
    const auto& t = tables[channel];
    return t[color_bin_index(v, static_cast<int>(t.size()))];
  }

  static int color_bin_index(double v, int bins) {
    return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
  }
};

namespace color_detail {

// Empirical quantile with linear interpolation between order statistics.
inline double quantile(const std::vector<double>& sorted, double p) {
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size()) - 0.5;
  if (pos <= 0.0) return sorted.front();
  const auto last = static_cast<double>(sorted.size() - 1);
  if (pos >= last) return sorted.back();
  const auto lo = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(lo);
  return sorted[lo] + f * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace color_detail

// table[v] = Q_cloud(F_query(v)), with F_query evaluated at the middle of
// each bin's probability mass.
inline ColorMap fit_color_map(const Panorama& query, const PointCloud& cloud, int bins = 256) {
  if (cloud.empty()) throw EmptyInput("color matching needs a non-empty cloud");
  if (bins < 2) throw Error("color map needs at least two bins");
  ColorMap map;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> target(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) target[i] = cloud.colors[i][ch];
    std::sort(target.begin(), target.end());

    std::vector<double> hist(bins, 0.0);
    double total = 0.0;
    for (int r = 0; r < query.height(); ++r) {
      for (int c = 0; c < query.width(); ++c) {
        if (!query.valid(r, c)) continue;
        hist[ColorMap::color_bin_index(query.channel(r, c, ch), bins)] += 1.0;
        total += 1.0;
      }
    }
    if (total == 0.0) throw EmptyInput("color matching needs at least one valid query pixel");

    auto& table = map.tables[ch];
    table.resize(bins);
    double below = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double p = (below + 0.5 * hist[b]) / total;
      table[b] = color_detail::quantile(target, p);
      below += hist[b];
    }
  }
  return map;
}

inline Panorama apply_color_map(const ColorMap& map, const Panorama& image) {
  Panorama out = image;
  auto& px = out.pixels();
  const auto& valid = out.valid_mask();
  for (std::size_t k = 0; k < valid.size(); ++k) {
    if (!valid[k]) continue;
    for (int ch = 0; ch < 3; ++ch) px[3 * k + ch] = static_cast<float>(map.apply(ch, px[3 * k + ch]));
  }
  return out;
}

}  // namespace cpo
