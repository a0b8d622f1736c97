#include "fla/metrics/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

namespace fla {
namespace {

struct ScoredDetection {
  double score;
  std::size_t image;
  std::size_t order;  // original rank within the image, for deterministic ties
  const Detection* det;
};

}  // namespace

std::optional<double> average_precision(const std::vector<ImageEval>& evals,
                                        int category, double iou_threshold) {
  require(iou_threshold > 0.0 && iou_threshold < 1.0,
          "average_precision: iou_threshold must be in (0,1)");

  std::size_t total_gt = 0;
  std::vector<ScoredDetection> dets;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    for (const GroundTruthObject& g : evals[i].ground_truth) {
      if (g.category == category) ++total_gt;
    }
    for (std::size_t k = 0; k < evals[i].detections.size(); ++k) {
      const Detection& d = evals[i].detections[k];
      if (d.category == category) dets.push_back({d.score, i, k, &d});
    }
  }
  if (total_gt == 0) return std::nullopt;

  std::sort(dets.begin(), dets.end(), [](const ScoredDetection& a, const ScoredDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.order < b.order;
  });

  std::vector<std::vector<bool>> matched(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    matched[i].assign(evals[i].ground_truth.size(), false);
  }

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const ScoredDetection& sd : dets) {
    const GroundTruth& gt = evals[sd.image].ground_truth;
    double best_iou = 0.0;
    std::size_t best_idx = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt[g].category != category || matched[sd.image][g]) continue;
      const double iou = sd.det->box.iou(gt[g].box());
      if (iou > best_iou) {
        best_iou = iou;
        best_idx = g;
      }
    }
    if (best_idx < gt.size() && best_iou >= iou_threshold) {
      matched[sd.image][best_idx] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  // all-point interpolation: integrate recall against the running max of
  // precision to the right
  double ap = 0.0;
  double prev_recall = 0.0;
  double max_to_right = 0.0;
  std::vector<double> envelope(precision.size());
  for (std::size_t i = precision.size(); i-- > 0;) {
    max_to_right = std::max(max_to_right, precision[i]);
    envelope[i] = max_to_right;
  }
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * envelope[i];
    prev_recall = recall[i];
  }
  return ap;
}

double mean_average_precision(const std::vector<ImageEval>& evals,
                              int num_classes, double iou_threshold) {
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (auto ap = average_precision(evals, c, iou_threshold)) {
      sum += *ap;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : sum / counted;
}

double attack_success_ratio(double map_clean, double map_attack) {
  if (map_clean <= 0.0) {
    throw std::domain_error("attack_success_ratio: undefined for mAP_clean <= 0");
  }
  return 1.0 - map_attack / map_clean;
}

double attack_transfer_ratio(double asr_target, double asr_origin) {
  if (asr_origin <= 0.0) {
    throw std::domain_error("attack_transfer_ratio: undefined for ASR_origin <= 0");
  }
  return asr_target / asr_origin;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["map_clean"] = map_clean;
  j["map_attack"] = map_attack;
  j["asr"] = asr;
  if (map_attack_jpeg) j["map_attack_jpeg"] = *map_attack_jpeg;
  if (asr_jpeg) j["asr_jpeg"] = *asr_jpeg;
  if (atr) j["atr"] = *atr;
  j["p_l2"] = p_l2;
  j["p_l0"] = p_l0;
  j["mean_attack_time_s"] = mean_attack_time_s;
  j["mean_iterations"] = mean_iterations;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MetricsReport r;
  r.map_clean = j.at("map_clean").get<double>();
  r.map_attack = j.at("map_attack").get<double>();
  r.asr = j.at("asr").get<double>();
  if (j.contains("map_attack_jpeg")) r.map_attack_jpeg = j["map_attack_jpeg"].get<double>();
  if (j.contains("asr_jpeg")) r.asr_jpeg = j["asr_jpeg"].get<double>();
  if (j.contains("atr")) r.atr = j["atr"].get<double>();
  r.p_l2 = j.at("p_l2").get<double>();
  r.p_l0 = j.at("p_l0").get<double>();
  r.mean_attack_time_s = j.at("mean_attack_time_s").get<double>();
  r.mean_iterations = j.at("mean_iterations").get<double>();
  return r;
}

}  // namespace fla
