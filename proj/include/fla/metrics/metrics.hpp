#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fla/core/detection.hpp"
#include "fla/core/types.hpp"

namespace fla {

/// Detections and labels for one evaluated image.
struct ImageEval {
  std::vector<Detection> detections;
  GroundTruth ground_truth;
};

/// All-point interpolated average precision for one class at the given IoU
/// threshold. Detections are matched greedily in descending score order,
/// each ground truth at most once. Returns nullopt when the class has no
/// ground truths (excluded from the mean).
std::optional<double> average_precision(const std::vector<ImageEval>& evals,
                                        int category, double iou_threshold = 0.5);

/// Mean of per-class AP over classes that appear in the ground truth.
double mean_average_precision(const std::vector<ImageEval>& evals,
                              int num_classes, double iou_threshold = 0.5);

/// ASR = 1 - mAP_attack / mAP_clean. map_clean must be positive.
double attack_success_ratio(double map_clean, double map_attack);

/// ATR = ASR_target / ASR_origin. asr_origin must be positive.
double attack_transfer_ratio(double asr_target, double asr_origin);

/// Root mean square over every scalar entry of the perturbation.
template <typename Scalar>
double perceptibility_l2(const PlaneStack<Scalar>& r) {
  if (r.data.size() == 0) return 0.0;
  const double sum_sq = r.data.template cast<double>().array().square().sum();
  return std::sqrt(sum_sq / static_cast<double>(r.data.size()));
}

/// Fraction of pixel positions with any nonzero channel.
template <typename Scalar>
double perceptibility_l0(const PlaneStack<Scalar>& r) {
  if (r.pixels() == 0) return 0.0;
  Eigen::Index changed = 0;
  for (Eigen::Index p = 0; p < r.pixels(); ++p) {
    if ((r.data.col(p).array() != Scalar(0)).any()) ++changed;
  }
  return static_cast<double>(changed) / static_cast<double>(r.pixels());
}

/// Aggregate result bundle for one experiment run.
struct MetricsReport {
  double map_clean = 0;
  double map_attack = 0;
  double asr = 0;
  std::optional<double> map_attack_jpeg;  // after the save/reload protocol
  std::optional<double> asr_jpeg;
  std::optional<double> atr;
  double p_l2 = 0;
  double p_l0 = 0;
  double mean_attack_time_s = 0;
  double mean_iterations = 0;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

}  // namespace fla
