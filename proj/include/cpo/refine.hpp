#pragma once

// Pose refinement: weighted color sampling loss between cloud points and
// the query panorama, its analytic gradient, and Adam iterations on SE(3).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cpo/error.hpp"
#include "cpo/geometry.hpp"
#include "cpo/parallel.hpp"
#include "cpo/random.hpp"
#include "cpo/types.hpp"

namespace cpo {

struct RefineConfig {
  int iterations = 200;
  double step_size = 0.01;
  // Step size anneals (cosine) from step_size to step_size * final_step_scale.
  double final_step_scale = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t point_budget = 20000;
  std::uint64_t seed = 0;

  void check() const {
    if (iterations < 1) throw ConfigError("refine iterations must be at least 1");
    if (!(step_size > 0.0)) throw ConfigError("refine step size must be positive");
    if (!(final_step_scale > 0.0 && final_step_scale <= 1.0))
      throw ConfigError("final step scale must be in (0, 1]");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw ConfigError("Adam betas must be in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (point_budget < 1) throw ConfigError("point budget must be at least 1");
  }

  bool operator==(const RefineConfig&) const = default;
};

struct RefineResult {
  Pose pose;
  double final_loss = 0.0;
  std::vector<double> loss_trace;
  bool converged = false;
};

struct ColorSample {
  Color value = Color::Zero();
  Color du = Color::Zero();  // d value / d u
  Color dv = Color::Zero();  // d value / d v
};

// Bilinear lookup with azimuthal wrap in u and clamping in v. Pixel values
// are read regardless of the validity mask.
inline ColorSample sample_bilinear(const Panorama& image, double u, double v) {
  const int w = image.width();
  const int h = image.height();
  const double fu0 = std::floor(u);
  const double fu = u - fu0;
  int c0 = static_cast<int>(fu0) % w;
  if (c0 < 0) c0 += w;
  const int c1 = c0 + 1 == w ? 0 : c0 + 1;

  int r0;
  int r1;
  double fv;
  bool v_inside = true;
  if (v <= 0.0) {
    r0 = r1 = 0;
    fv = 0.0;
    v_inside = false;
  } else if (v >= h - 1) {
    r0 = r1 = h - 1;
    fv = 0.0;
    v_inside = false;
  } else {
    const double fv0 = std::floor(v);
    r0 = static_cast<int>(fv0);
    r1 = r0 + 1;
    fv = v - fv0;
  }

  const float* p00 = &image.pixels()[image.index(r0, c0) * 3];
  const float* p01 = &image.pixels()[image.index(r0, c1) * 3];
  const float* p10 = &image.pixels()[image.index(r1, c0) * 3];
  const float* p11 = &image.pixels()[image.index(r1, c1) * 3];
  ColorSample s;
  for (int k = 0; k < 3; ++k) {
    const double top = p00[k] + fu * (p01[k] - p00[k]);
    const double bottom = p10[k] + fu * (p11[k] - p10[k]);
    s.value[k] = top + fv * (bottom - top);
    s.du[k] = (1.0 - fv) * (p01[k] - p00[k]) + fv * (p11[k] - p10[k]);
    s.dv[k] = v_inside ? bottom - top : 0.0;
  }
  return s;
}

inline std::vector<Color> sample_image(const Panorama& image, std::span<const PixelCoord> coords) {
  std::vector<Color> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(sample_bilinear(image, c.u, c.v).value);
  return out;
}

struct LossAndGradient {
  double loss = 0.0;
  // d loss / d (omega, delta) for the camera-frame update
  // p -> exp(omega) p + delta, i.e. R' = exp(omega) R, t' = exp(omega) t + delta.
  Vec6 gradient = Vec6::Zero();
};

// Pose after a tangent step (rotation part first three entries).
inline Pose retract(const Pose& pose, const Vec6& step) {
  const Mat3 dr = exp_so3(step.head<3>());
  return {dr * pose.rotation, dr * pose.translation + step.tail<3>()};
}

namespace refine_detail {

// Fixed block size keeps the summation order independent of thread count.
inline constexpr std::size_t kBlock = 2048;

struct Partial {
  double sq = 0.0;
  Vec6 grad = Vec6::Zero();
};

}  // namespace refine_detail

// L = || M3D (.) [Gamma(Pi(R X + t); I_Q) - C] ||_2 / sqrt(|subset|)
inline LossAndGradient sampling_loss(const Pose& pose, const PointCloud& cloud, const Panorama& query,
                                     std::span<const double> weights, std::span<const std::uint32_t> subset,
                                     bool with_gradient = true) {
  using refine_detail::kBlock;
  LossAndGradient out;
  if (subset.empty()) return out;
  const int h = query.height();
  const int w = query.width();
  const std::size_t blocks = (subset.size() + kBlock - 1) / kBlock;
  std::vector<refine_detail::Partial> partial(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    refine_detail::Partial acc;
    const std::size_t end = std::min(subset.size(), (b + 1) * kBlock);
    for (std::size_t k = b * kBlock; k < end; ++k) {
      const std::uint32_t idx = subset[k];
      const double wt = weights[idx];
      if (wt == 0.0) continue;
      const Vec3 p = pose.apply(cloud.positions[idx]);
      PixelCoord px;
      Eigen::Matrix<double, 2, 3> jac;
      if (!project_with_jacobian(p, h, w, px, jac)) continue;
      const ColorSample s = sample_bilinear(query, px.u, px.v);
      const Color r = wt * (s.value - cloud.colors[idx]);
      acc.sq += r.squaredNorm();
      if (!with_gradient) continue;
      // d(0.5 |r|^2)/d(u, v)
      const double gu = wt * r.dot(s.du);
      const double gv = wt * r.dot(s.dv);
      const Vec3 gp = gu * jac.row(0).transpose() + gv * jac.row(1).transpose();
      acc.grad.head<3>() += p.cross(gp);
      acc.grad.tail<3>() += gp;
    }
    partial[b] = acc;
  });
  double sq = 0.0;
  Vec6 grad = Vec6::Zero();
  for (const auto& p : partial) {
    sq += p.sq;
    grad += p.grad;
  }
  const double n = static_cast<double>(subset.size());
  out.loss = std::sqrt(sq / n);
  if (with_gradient && out.loss > 0.0) out.gradient = grad / (out.loss * n);
  return out;
}

// Deterministic subset of min(budget, N) point indices, sorted.
inline std::vector<std::uint32_t> sample_subset(std::size_t n, std::size_t budget, std::uint64_t seed) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (budget >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline RefineResult refine_pose(const Pose& candidate, const PointCloud& cloud, const Panorama& query,
                                std::span<const double> weights, const RefineConfig& config) {
  config.check();
  const auto subset = sample_subset(cloud.size(), config.point_budget, config.seed);
  RefineResult res;
  res.pose = candidate;
  res.loss_trace.reserve(config.iterations + 1);
  Vec6 m = Vec6::Zero();
  Vec6 v = Vec6::Zero();
  double b1t = 1.0;
  double b2t = 1.0;
  for (int it = 0; it < config.iterations; ++it) {
    const LossAndGradient lg = sampling_loss(res.pose, cloud, query, weights, subset);
    res.loss_trace.push_back(lg.loss);
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * lg.gradient;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * lg.gradient.cwiseAbs2();
    b1t *= config.adam_beta1;
    b2t *= config.adam_beta2;
    const double progress = config.iterations > 1 ? static_cast<double>(it) / (config.iterations - 1) : 0.0;
    const double scale =
        config.final_step_scale + (1.0 - config.final_step_scale) * 0.5 * (1.0 + std::cos(kPi * progress));
    const double lr = config.step_size * scale;
    const Vec6 mhat = m / (1.0 - b1t);
    const Vec6 vhat = v / (1.0 - b2t);
    const Vec6 step = -lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + config.adam_epsilon).matrix());
    res.pose = retract(res.pose, step);
  }
  res.final_loss = sampling_loss(res.pose, cloud, query, weights, subset, false).loss;
  res.loss_trace.push_back(res.final_loss);
  const std::size_t mid = static_cast<std::size_t>(std::max(1, config.iterations / 2));
  res.converged = res.final_loss <= res.loss_trace[mid];
  return res;
}

// Lowest final loss wins; ties keep the earlier result.
inline const RefineResult& select_final(std::span<const RefineResult> results) {
  if (results.empty()) throw EmptyInput("no refinement results to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].final_loss < results[best].final_loss) best = i;
  return results[best];
}

}  // namespace cpo
