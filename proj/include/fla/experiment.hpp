#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fla/attack/baselines.hpp"
#include "fla/attack/fla.hpp"
#include "fla/data/shapes.hpp"
#include "fla/detector/net.hpp"
#include "fla/metrics/metrics.hpp"

namespace fla {

enum class AttackMethod { fla, fgsm, pgd };

std::optional<AttackMethod> parse_attack_method(const std::string& name);
const char* attack_method_name(AttackMethod method);

struct ExperimentConfig {
  AttackConfig attack;
  BaselineConfig baseline;
  int jpeg_quality = 95;
  int threads = 0;
  double iou_threshold = 0.5;
};

struct ImageAttackOutcome {
  Perturbation<float> perturbation;
  Image<float> adversarial;
  AttackTrace trace;  // rows only for the localized attack
  double seconds = 0;
  DetectionSet clean_detections;
  DetectionSet adv_detections;
  DetectionSet adv_jpeg_detections;
};

struct AttackRunSummary {
  MetricsReport report;
  std::vector<ImageAttackOutcome> outcomes;
};

/// Attacks every image of the dataset (fanning out over a worker pool),
/// evaluates clean/adversarial/JPEG-reloaded detections and aggregates the
/// metric bundle. Attacks on distinct images share the read-only model.
AttackRunSummary run_attack_experiment(const KeypointNet<float>& net,
                                       const Dataset& dataset, AttackMethod method,
                                       const ExperimentConfig& config);

/// Black-box protocol: evaluate a target model on JPEG-reloaded adversarial
/// images generated elsewhere, and relate its ASR to the origin model's.
MetricsReport transfer_evaluation(const KeypointNet<float>& target_net,
                                  const Dataset& clean_dataset,
                                  const std::vector<Image<float>>& adversarial_images,
                                  double asr_origin, int threads = 0);

struct SweepRow {
  int radius = 0;
  double asr = 0;
  double p_l0 = 0;
  double p_l2 = 0;
  double mean_time_s = 0;
};

/// Reruns the localized attack for each radius and collects the trade-off
/// curve (one row per radius).
std::vector<SweepRow> radius_sweep(const KeypointNet<float>& net,
                                   const Dataset& dataset,
                                   const std::vector<int>& radii,
                                   const ExperimentConfig& base_config);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Writes adversarial images (lossless PPM + JPEG), signed perturbation
/// images, per-image iteration traces and report.json under out_dir.
void save_attack_outputs(const std::filesystem::path& out_dir,
                         const AttackRunSummary& summary,
                         const ExperimentConfig& config, int num_classes);

/// Loads the adv_jpeg/ images written by save_attack_outputs, in index order.
std::vector<Image<float>> load_adversarial_images(const std::filesystem::path& dir);

}  // namespace fla
