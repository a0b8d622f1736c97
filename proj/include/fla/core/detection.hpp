#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace fla {

/// Axis-aligned box in image pixel coordinates.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const {
    return std::max(0.0, width()) * std::max(0.0, height());
  }

  double iou(const Box& other) const {
    const double ix = std::min(x_max, other.x_max) - std::max(x_min, other.x_min);
    const double iy = std::min(y_max, other.y_max) - std::max(y_min, other.y_min);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = area() + other.area() - inter;
    return uni <= 0 ? 0.0 : inter / uni;
  }
};

struct Detection {
  Box box;
  int category = 0;
  double score = 0;
  int center_x = 0;  // heatmap cell coordinates of the peak
  int center_y = 0;
};

struct DetectionSet {
  std::vector<Detection> detections;  // sorted by descending score
  std::string source_image_id;
};

struct GroundTruthObject {
  double center_x = 0, center_y = 0;  // image pixels
  double width = 0, height = 0;       // image pixels
  int category = 0;

  Box box() const {
    return Box{center_x - width / 2, center_y - height / 2,
               center_x + width / 2, center_y + height / 2};
  }
};

using GroundTruth = std::vector<GroundTruthObject>;

}  // namespace fla
