#pragma once

#include "fla/attack/fla.hpp"
#include "fla/attack/types.hpp"
#include "fla/core/types.hpp"
#include "fla/detector/net.hpp"

namespace fla {

/// Knobs of the global single-step and iterative sign attacks. The budget
/// doubles as the L-inf projection radius for the iterative variant.
struct BaselineConfig {
  double budget = 16.0 / 255.0;     // epsilon
  double step_size = 4.0 / 255.0;   // alpha, per-iteration step
  int iterations = 10;
  double projection_radius = 16.0 / 255.0;  // s, equals the budget
  double peak_threshold = 0.3;

  void validate() const {
    require(budget > 0.0, "BaselineConfig: budget must be > 0");
    require(step_size > 0.0, "BaselineConfig: step_size must be > 0");
    require(iterations >= 1, "BaselineConfig: iterations must be >= 1");
    require(projection_radius > 0.0, "BaselineConfig: projection_radius must be > 0");
  }
};

/// Detection loss for the global baselines: sum of -log activations over all
/// detected keypoints, every category together, no mask. One backward pass.
template <typename Scalar>
Image<Scalar> detection_loss_gradient(const KeypointNet<Scalar>& net,
                                      const Image<Scalar>& image,
                                      const TargetPointSet& points) {
  typename KeypointNet<Scalar>::Trace trace;
  const auto out = net.forward(image, trace);
  Heatmap<Scalar> d_heat = Heatmap<Scalar>::zeros_like(out.heatmap);
  for (const TargetPoint& p : points) {
    const double v = static_cast<double>(out.heatmap(p.category, p.x, p.y));
    if (v > kLogClamp) d_heat(p.category, p.x, p.y) += Scalar(-1.0 / v);
  }
  const PlaneStack<Scalar> d_zero2(2, out.size_map.width, out.size_map.height);
  return net.backward(trace, d_heat, d_zero2, d_zero2);
}

/// Single unmasked sign step from a precomputed gradient, clamped to [0, 1].
template <typename Scalar>
Image<Scalar> sign_step(const Image<Scalar>& image, const Image<Scalar>& gradient,
                        double epsilon) {
  Image<Scalar> out = image;
  out.data += (gradient.data.array().sign() * Scalar(epsilon)).matrix();
  clamp01_inplace(out);
  return out;
}

/// x' = clamp01(x + eps * sign(grad of total detection loss)). Images with
/// no detections come back unperturbed.
template <typename Scalar>
Perturbation<Scalar> fgsm(const KeypointNet<Scalar>& net, const Image<Scalar>& image,
                          const BaselineConfig& config) {
  config.validate();
  const Heatmap<Scalar> heatmap = net.forward(image).heatmap;
  const TargetPointSet points = select_target_points(heatmap, config.peak_threshold);

  Perturbation<Scalar> r;
  r.iterations_used = points.empty() ? 0 : 1;
  if (points.empty()) {
    r.data = Image<Scalar>::zeros_like(image);
    return r;
  }
  const Image<Scalar> gradient = detection_loss_gradient(net, image, points);
  r.data = sign_step(image, gradient, config.budget);
  r.data.data -= image.data;
  return r;
}

/// Iterative sign steps of size alpha, each projected onto the L-inf ball of
/// radius s around the clean image and clamped to [0, 1]. The target point
/// set is the one detected on the clean image.
template <typename Scalar>
Perturbation<Scalar> run_pgd(const KeypointNet<Scalar>& net, const Image<Scalar>& image,
                             const BaselineConfig& config) {
  config.validate();
  const Heatmap<Scalar> heatmap = net.forward(image).heatmap;
  const TargetPointSet points = select_target_points(heatmap, config.peak_threshold);

  Perturbation<Scalar> r;
  if (points.empty()) {
    r.data = Image<Scalar>::zeros_like(image);
    r.iterations_used = 0;
    return r;
  }

  const MatrixX<Scalar> lo =
      (image.data.array() - Scalar(config.projection_radius)).max(Scalar(0)).matrix();
  const MatrixX<Scalar> hi =
      (image.data.array() + Scalar(config.projection_radius)).min(Scalar(1)).matrix();

  Image<Scalar> x = image;
  for (int t = 0; t < config.iterations; ++t) {
    const Image<Scalar> gradient = detection_loss_gradient(net, x, points);
    x = sign_step(x, gradient, config.step_size);
    x.data = x.data.cwiseMin(hi).cwiseMax(lo);
  }
  r.data = x;
  r.data.data -= image.data;
  r.iterations_used = config.iterations;
  return r;
}

}  // namespace fla
