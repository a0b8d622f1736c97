#pragma once

#include <vector>

#include "fla/core/types.hpp"

namespace fla {

/// Geometry and decoding parameters of the keypoint detector. The trunk is
/// fixed at four stride-2 stages followed by two 2x upsampling stages, so the
/// heatmap is always at 1/4 image resolution.
struct DetectorConfig {
  int input_size = 128;   // square input, pixels
  int downsample = 4;     // R: image to heatmap resolution ratio
  int num_classes = 3;    // C
  // channel widths: 4 downsampling stages then 2 upsampling stages
  std::vector<int> stage_channels = {16, 24, 32, 48, 32, 24};
  // adds a pooled global descriptor back onto the deepest stage, giving every
  // output full-image support (baseline attacks then perturb everywhere)
  bool global_context = true;
  double peak_threshold = 0.3;  // minimum confidence for a detected keypoint
  int max_detections = 32;

  int heatmap_size() const { return input_size / downsample; }

  void validate() const {
    require(downsample == 4, "DetectorConfig: trunk geometry fixes downsample at 4");
    require(input_size > 0 && input_size % 16 == 0,
            "DetectorConfig: input_size must be a positive multiple of 16");
    require(num_classes >= 1, "DetectorConfig: num_classes must be >= 1");
    require(stage_channels.size() == 6, "DetectorConfig: expected 6 stage widths");
    for (int c : stage_channels) require(c >= 1, "DetectorConfig: stage width must be >= 1");
    require(peak_threshold > 0.0 && peak_threshold < 1.0,
            "DetectorConfig: peak_threshold must be in (0,1)");
    require(max_detections >= 1, "DetectorConfig: max_detections must be >= 1");
  }

  bool operator==(const DetectorConfig&) const = default;
};

}  // namespace fla
