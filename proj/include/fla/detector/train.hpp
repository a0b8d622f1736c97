#pragma once

#include <stdexcept>
#include <vector>

#include "fla/data/shapes.hpp"
#include "fla/detector/net.hpp"

namespace fla {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double lr_decay = 0.1;        // multiplier applied at decay_epoch
  int decay_epoch = 22;
  double size_loss_weight = 0.1;
  double offset_loss_weight = 1.0;
  double map_gate = 0.8;        // required validation mAP@0.5
  double early_stop_map = 0.9;  // stop once validation mAP reaches this
  int eval_every = 2;           // epochs between validation passes
  int threads = 0;              // 0 = hardware concurrency

  void validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    require(map_gate >= 0.0 && map_gate <= 1.0, "TrainConfig: map_gate must be in [0,1]");
  }
};

/// Supervision for one image: per-class Gaussian splat heatmap plus size and
/// offset regression targets at the object center cells.
struct TrainingTargets {
  Heatmap<float> heatmap;
  struct CenterTarget {
    int cell_x = 0, cell_y = 0;
    float size_x = 0, size_y = 0;  // heatmap cells
    float off_x = 0, off_y = 0;    // cell fractions
  };
  std::vector<CenterTarget> centers;
};

TrainingTargets make_training_targets(const GroundTruth& gt,
                                      const DetectorConfig& config);

struct EpochStats {
  int epoch = 0;
  double heatmap_loss = 0;
  double size_loss = 0;
  double offset_loss = 0;
  double val_map = -1;  // -1 when not evaluated this epoch
};

struct TrainResult {
  KeypointNet<float> net;
  double final_map = 0;
  std::vector<EpochStats> history;
};

/// Raised when training finishes below the validation mAP gate.
class TrainingGateFailure : public std::runtime_error {
 public:
  TrainingGateFailure(double achieved, double gate)
      : std::runtime_error("training finished below the mAP gate: achieved " +
                           std::to_string(achieved) + " < " + std::to_string(gate)),
        achieved_map(achieved),
        gate(gate) {}
  double achieved_map;
  double gate;
};

/// Validation mAP@0.5 of a model over a dataset (decode + match).
double evaluate_map(const KeypointNet<float>& net, const Dataset& dataset,
                    int threads = 0);

/// Focal-style heatmap loss + L1 size/offset training from a fixed seed.
/// Deterministic: same seed, data and config give bit-identical weights.
TrainResult train_detector(const Dataset& train_set, const Dataset& val_set,
                           const DetectorConfig& det_config,
                           const TrainConfig& config, std::uint64_t seed);

}  // namespace fla
