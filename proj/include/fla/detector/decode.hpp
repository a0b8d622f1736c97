#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "fla/core/detection.hpp"
#include "fla/core/types.hpp"
#include "fla/detector/config.hpp"
#include "fla/detector/net.hpp"

namespace fla {

struct HeatmapPeak {
  int x = 0, y = 0;  // heatmap cell
  int category = 0;
  double score = 0;
};

/// Strict 3x3 local maxima per class channel with score >= threshold.
/// A cell tied with a neighbour is not a peak; border cells compare against
/// in-bounds neighbours only. Results are ordered by (y, x, category).
template <typename Scalar>
std::vector<HeatmapPeak> find_heatmap_peaks(const Heatmap<Scalar>& heatmap,
                                            double threshold) {
  std::vector<HeatmapPeak> peaks;
  for (int y = 0; y < heatmap.height; ++y) {
    for (int x = 0; x < heatmap.width; ++x) {
      for (int c = 0; c < heatmap.channels(); ++c) {
        const Scalar v = heatmap(c, x, y);
        if (static_cast<double>(v) < threshold) continue;
        bool is_peak = true;
        for (int dy = -1; dy <= 1 && is_peak; ++dy) {
          for (int dx = -1; dx <= 1 && is_peak; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (!heatmap.contains(nx, ny)) continue;
            if (heatmap(c, nx, ny) >= v) is_peak = false;
          }
        }
        if (is_peak) peaks.push_back({x, y, c, static_cast<double>(v)});
      }
    }
  }
  return peaks;
}

/// (category, confidence) at a heatmap cell: argmax over channels, ties
/// broken toward the lowest class index.
template <typename Scalar>
std::pair<int, double> category_at_point(const Heatmap<Scalar>& heatmap, int x,
                                         int y) {
  if (!heatmap.contains(x, y)) {
    throw std::out_of_range("category_at_point: point outside heatmap");
  }
  int best = 0;
  Scalar best_value = heatmap(0, x, y);
  for (int c = 1; c < heatmap.channels(); ++c) {
    const Scalar v = heatmap(c, x, y);
    if (v > best_value) {
      best = c;
      best_value = v;
    }
  }
  return {best, static_cast<double>(best_value)};
}

/// Boxes from heatmap peaks: center = (cell + offset) * R, extent from the
/// size map (heatmap cells), clamped into the image. Top max_detections by
/// score.
template <typename Scalar>
DetectionSet decode_detections(const Heatmap<Scalar>& heatmap,
                               const PlaneStack<Scalar>& size_map,
                               const PlaneStack<Scalar>& offset_map,
                               const DetectorConfig& config,
                               double threshold) {
  require(size_map.same_shape(offset_map) && size_map.width == heatmap.width &&
              size_map.height == heatmap.height,
          "decode_detections: map shapes disagree");
  const double R = config.downsample;
  const double img = static_cast<double>(heatmap.width) * R;

  DetectionSet result;
  for (const HeatmapPeak& p : find_heatmap_peaks(heatmap, threshold)) {
    const double ox = std::clamp(static_cast<double>(offset_map(0, p.x, p.y)), 0.0, 1.0);
    const double oy = std::clamp(static_cast<double>(offset_map(1, p.x, p.y)), 0.0, 1.0);
    const double cx = (p.x + ox) * R;
    const double cy = (p.y + oy) * R;
    const double half_w = std::max(0.5, static_cast<double>(size_map(0, p.x, p.y)) * R / 2);
    const double half_h = std::max(0.5, static_cast<double>(size_map(1, p.x, p.y)) * R / 2);

    Detection det;
    det.box.x_min = std::clamp(cx - half_w, 0.0, img - 1.0);
    det.box.y_min = std::clamp(cy - half_h, 0.0, img - 1.0);
    det.box.x_max = std::clamp(cx + half_w, det.box.x_min + 1.0, img);
    det.box.y_max = std::clamp(cy + half_h, det.box.y_min + 1.0, img);
    det.category = p.category;
    det.score = p.score;
    det.center_x = p.x;
    det.center_y = p.y;
    result.detections.push_back(det);
  }
  std::sort(result.detections.begin(), result.detections.end(),
            [](const Detection& a, const Detection& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.center_y != b.center_y) return a.center_y < b.center_y;
              if (a.center_x != b.center_x) return a.center_x < b.center_x;
              return a.category < b.category;
            });
  if (static_cast<int>(result.detections.size()) > config.max_detections) {
    result.detections.resize(static_cast<std::size_t>(config.max_detections));
  }
  return result;
}

template <typename Scalar>
DetectionSet detect(const KeypointNet<Scalar>& net, const Image<Scalar>& image) {
  const auto out = net.forward(image);
  return decode_detections(out.heatmap, out.size_map, out.offset_map,
                           net.config(), net.config().peak_threshold);
}

}  // namespace fla
