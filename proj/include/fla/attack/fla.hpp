#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "fla/attack/types.hpp"
#include "fla/core/types.hpp"
#include "fla/detector/decode.hpp"
#include "fla/detector/net.hpp"

namespace fla {

inline constexpr double kLogClamp = 1e-12;

/// All detected keypoints (strict 3x3 local maxima above the threshold),
/// carrying the channel they peaked on.
template <typename Scalar>
TargetPointSet select_target_points(const Heatmap<Scalar>& heatmap,
                                    double peak_threshold) {
  TargetPointSet set;
  for (const HeatmapPeak& p : find_heatmap_peaks(heatmap, peak_threshold)) {
    set.add({p.x, p.y, p.category, false});
  }
  return set;
}

/// Adds every cell within Chebyshev distance neighbor_radius of an existing
/// point, clamped to the heatmap. Neighbors inherit the seed point's
/// category; duplicates collapse.
inline TargetPointSet expand_neighbors(const TargetPointSet& points,
                                       int neighbor_radius, int heatmap_width,
                                       int heatmap_height) {
  TargetPointSet out;
  for (const TargetPoint& p : points) out.add(p);
  for (const TargetPoint& p : points) {
    for (int dy = -neighbor_radius; dy <= neighbor_radius; ++dy) {
      for (int dx = -neighbor_radius; dx <= neighbor_radius; ++dx) {
        const int nx = p.x + dx, ny = p.y + dy;
        if (nx < 0 || nx >= heatmap_width || ny < 0 || ny >= heatmap_height) continue;
        out.add({nx, ny, p.category, true});
      }
    }
  }
  return out;
}

/// Splits a point set by category. Categories without points are absent.
inline std::map<int, TargetPointSet> partition_by_category(const TargetPointSet& points) {
  std::map<int, TargetPointSet> parts;
  for (const TargetPoint& p : points) parts[p.category].add(p);
  return parts;
}

/// Sum over points of -log(activation at the point's category), activations
/// clamped at kLogClamp. Pure function of a heatmap; the model-bound
/// category_loss below evaluates it on a forward pass.
template <typename Scalar>
double heatmap_nll(const Heatmap<Scalar>& heatmap, const TargetPointSet& points,
                   int category) {
  double loss = 0.0;
  for (const TargetPoint& p : points) {
    require(p.category == category, "heatmap_nll: point category mismatch");
    const double v = static_cast<double>(heatmap(category, p.x, p.y));
    loss += -std::log(std::max(v, kLogClamp));
  }
  return loss;
}

/// Gradient of heatmap_nll with respect to the (post-sigmoid) heatmap:
/// -1/activation at each target, zero inside the log clamp region.
template <typename Scalar>
Heatmap<Scalar> heatmap_nll_grad(const Heatmap<Scalar>& heatmap,
                                 const TargetPointSet& points, int category) {
  Heatmap<Scalar> d = Heatmap<Scalar>::zeros_like(heatmap);
  for (const TargetPoint& p : points) {
    const double v = static_cast<double>(heatmap(category, p.x, p.y));
    if (v > kLogClamp) {
      d(category, p.x, p.y) += Scalar(-1.0 / v);
    }
  }
  return d;
}

template <typename Scalar>
double category_loss(const KeypointNet<Scalar>& net, const Image<Scalar>& image,
                     const TargetPointSet& points, int category) {
  require(!points.empty(), "category_loss: empty point set");
  return heatmap_nll(net.forward(image).heatmap, points, category);
}

/// Gradient of category_loss with respect to the image. Ascending it lowers
/// the targeted activations.
template <typename Scalar>
Image<Scalar> category_gradient(const KeypointNet<Scalar>& net,
                                const Image<Scalar>& image,
                                const TargetPointSet& points, int category) {
  require(!points.empty(), "category_gradient: empty point set");
  typename KeypointNet<Scalar>::Trace trace;
  const auto out = net.forward(image, trace);
  const Heatmap<Scalar> d_heat = heatmap_nll_grad(out.heatmap, points, category);
  const PlaneStack<Scalar> d_zero2(2, out.size_map.width, out.size_map.height);
  return net.backward(trace, d_heat, d_zero2, d_zero2);
}

/// Scales so the largest absolute entry is exactly 1; all-zero input is
/// returned unchanged.
template <typename Scalar>
void normalize_linf_inplace(PlaneStack<Scalar>& g) {
  const Scalar m = max_abs(g);
  if (m > Scalar(0)) g.data /= m;
}

template <typename Scalar>
PlaneStack<Scalar> normalize_linf(PlaneStack<Scalar> g) {
  normalize_linf_inplace(g);
  return g;
}

/// Union of clamped squares of side 2*attack_radius+1, centered at each
/// point's image-space projection (cell center: coord * R + R/2).
inline AttackMask generate_mask(const TargetPointSet& points, int attack_radius,
                                int image_width, int image_height, int downsample) {
  require(image_width % downsample == 0 && image_height % downsample == 0,
          "generate_mask: image dims must be divisible by downsample");
  AttackMask mask;
  mask.data.setZero(image_height, image_width);
  for (const TargetPoint& p : points) {
    const int cx = p.x * downsample + downsample / 2;
    const int cy = p.y * downsample + downsample / 2;
    const int x0 = std::max(0, cx - attack_radius);
    const int x1 = std::min(image_width - 1, cx + attack_radius);
    const int y0 = std::max(0, cy - attack_radius);
    const int y1 = std::min(image_height - 1, cy + attack_radius);
    if (x0 > x1 || y0 > y1) continue;
    mask.data.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).setConstant(1);
  }
  return mask;
}

/// step * sign(summed gradient) * mask, with sign(0) = 0. Pixels where the
/// mask is 0 receive exactly 0.
template <typename Scalar>
Image<Scalar> compose_step_update(const Image<Scalar>& summed_gradient,
                                  const AttackMask& mask, double step) {
  Image<Scalar> update = summed_gradient;
  update.data = update.data.array().sign().matrix() * Scalar(step);
  const RowVectorX<Scalar> flat = mask.flat_row<Scalar>();
  update.data.array().rowwise() *= flat.array();
  return update;
}

template <typename Scalar>
struct FlaStepResult {
  Image<Scalar> image;  // next iterate
  AttackTraceRow trace;
};

/// Step core operating on an already computed forward pass of `image`.
template <typename Scalar>
FlaStepResult<Scalar> fla_step_on_trace(const KeypointNet<Scalar>& net,
                                        const Image<Scalar>& image,
                                        const TargetPointSet& points,
                                        const AttackConfig& config,
                                        const typename KeypointNet<Scalar>::Trace& trace,
                                        const typename KeypointNet<Scalar>::Output& out) {
  require(!points.empty(), "fla_step: empty target point set");
  const int num_classes = net.config().num_classes;
  const PlaneStack<Scalar> d_zero2(2, out.size_map.width, out.size_map.height);

  AttackTraceRow row;
  row.remaining_targets = static_cast<int>(points.size());
  row.loss_by_category.assign(static_cast<std::size_t>(num_classes),
                              std::numeric_limits<double>::quiet_NaN());
  row.grad_max_abs_by_category.assign(static_cast<std::size_t>(num_classes),
                                      std::numeric_limits<double>::quiet_NaN());

  Image<Scalar> summed = Image<Scalar>::zeros_like(image);
  for (const auto& [category, subset] : partition_by_category(points)) {
    row.loss_by_category[static_cast<std::size_t>(category)] =
        heatmap_nll(out.heatmap, subset, category);
    const Heatmap<Scalar> d_heat = heatmap_nll_grad(out.heatmap, subset, category);
    Image<Scalar> grad = net.backward(trace, d_heat, d_zero2, d_zero2);
    normalize_linf_inplace(grad);
    row.grad_max_abs_by_category[static_cast<std::size_t>(category)] =
        static_cast<double>(max_abs(grad));
    summed.data += grad.data;
  }

  const AttackMask mask = generate_mask(points, config.attack_radius, image.width,
                                        image.height, net.config().downsample);
  row.mask_area_fraction = mask.area_fraction();

  const double step = config.total_budget / config.max_iterations;
  FlaStepResult<Scalar> result;
  result.image = image;
  result.image.data += compose_step_update(summed, mask, step).data;
  clamp01_inplace(result.image);
  result.trace = row;
  return result;
}

/// One attack iteration: per-category normalized gradients are summed, the
/// sign step is confined to the mask, and the result is clamped to [0, 1].
/// Pixels outside the mask come back bit-identical.
template <typename Scalar>
FlaStepResult<Scalar> fla_step(const KeypointNet<Scalar>& net,
                               const Image<Scalar>& image,
                               const TargetPointSet& points,
                               const AttackConfig& config) {
  typename KeypointNet<Scalar>::Trace trace;
  const auto out = net.forward(image, trace);
  return fla_step_on_trace(net, image, points, config, trace, out);
}

/// Removal-only filter: keeps points whose recorded category is still
/// activated at or above the threshold.
template <typename Scalar>
TargetPointSet filter_points_by_activation(const Heatmap<Scalar>& heatmap,
                                           const TargetPointSet& points,
                                           double threshold) {
  TargetPointSet survivors;
  for (const TargetPoint& p : points) {
    if (static_cast<double>(heatmap(p.category, p.x, p.y)) >= threshold) {
      survivors.add(p);
    }
  }
  return survivors;
}

/// Recomputes the heatmap on the current iterate and drops successfully
/// attacked points. Never adds points.
template <typename Scalar>
TargetPointSet refresh_points(const KeypointNet<Scalar>& net,
                              const Image<Scalar>& image,
                              const TargetPointSet& points,
                              double refresh_threshold) {
  if (points.empty()) return points;
  return filter_points_by_activation(net.forward(image).heatmap, points,
                                     refresh_threshold);
}

template <typename Scalar>
struct FlaResult {
  Perturbation<Scalar> perturbation;
  AttackTrace trace;
  Image<Scalar> adversarial;
};

/// The full localized attack: select detected keypoints, widen by the
/// neighbor radius, then iterate masked sign steps with point refresh until
/// every target is suppressed or the iteration budget runs out. One forward
/// pass per iteration serves both the gradient step and the refresh.
template <typename Scalar>
FlaResult<Scalar> run_fla(const KeypointNet<Scalar>& net, const Image<Scalar>& image,
                          const AttackConfig& config) {
  config.validate();
  typename KeypointNet<Scalar>::Trace trace;
  auto out = net.forward(image, trace);
  TargetPointSet targets = expand_neighbors(
      select_target_points(out.heatmap, config.peak_threshold),
      config.neighbor_radius, out.heatmap.width, out.heatmap.height);

  // L-inf ball around the clean image; keeps the budget bound exact even
  // when float rounding accumulates across iterations
  const MatrixX<Scalar> lo =
      (image.data.array() - Scalar(config.total_budget)).max(Scalar(0)).matrix();
  const MatrixX<Scalar> hi =
      (image.data.array() + Scalar(config.total_budget)).min(Scalar(1)).matrix();

  FlaResult<Scalar> result;
  result.adversarial = image;

  int iterations = 0;
  while (!targets.empty() && iterations < config.max_iterations) {
    auto step = fla_step_on_trace(net, result.adversarial, targets, config, trace, out);
    result.adversarial = std::move(step.image);
    result.adversarial.data = result.adversarial.data.cwiseMin(hi).cwiseMax(lo);
    ++iterations;
    step.trace.iteration = iterations;
    result.trace.rows.push_back(std::move(step.trace));

    out = net.forward(result.adversarial, trace);
    targets = filter_points_by_activation(out.heatmap, targets,
                                          config.refresh_threshold);
  }

  result.trace.success = targets.empty();
  result.perturbation.data = result.adversarial;
  result.perturbation.data.data -= image.data;
  result.perturbation.iterations_used = iterations;
  return result;
}

}  // namespace fla
