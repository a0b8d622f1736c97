#include "fla/detector/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fla/core/parallel.hpp"
#include "fla/detector/decode.hpp"
#include "fla/metrics/metrics.hpp"

namespace fla {
namespace {

constexpr double kProbClamp = 1e-6;

/// Adam over the net's parameter blocks.
class Adam {
 public:
  Adam(std::vector<MatrixX<float>*> params, double lr)
      : params_(std::move(params)), lr_(lr) {
    for (const MatrixX<float>* p : params_) {
      m_.push_back(MatrixX<float>::Zero(p->rows(), p->cols()));
      v_.push_back(MatrixX<float>::Zero(p->rows(), p->cols()));
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }

  void step(const std::vector<MatrixX<float>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const float alpha = static_cast<float>(lr_ * std::sqrt(bc2) / bc1);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0f - beta1_) * grads[i];
      v_[i] = (beta2_ * v_[i].array() +
               (1.0f - beta2_) * grads[i].array().square())
                  .matrix();
      params_[i]->array() -=
          alpha * m_[i].array() / (v_[i].array().sqrt() + eps_);
    }
  }

 private:
  std::vector<MatrixX<float>*> params_;
  std::vector<MatrixX<float>> m_, v_;
  double lr_;
  float beta1_ = 0.9f, beta2_ = 0.999f;
  float eps_ = 1e-8f;
  int t_ = 0;
};

struct LossBreakdown {
  double heatmap = 0, size = 0, offset = 0;
};

/// Center-weighted focal loss on the heatmap plus L1 on size/offset at the
/// object centers. Fills the output-gradient seeds for the backward pass.
LossBreakdown detector_loss(const KeypointNet<float>::Output& out,
                            const TrainingTargets& targets,
                            const TrainConfig& cfg, Heatmap<float>& d_heat,
                            PlaneStack<float>& d_size,
                            PlaneStack<float>& d_offset) {
  d_heat = Heatmap<float>::zeros_like(out.heatmap);
  d_size = PlaneStack<float>::zeros_like(out.size_map);
  d_offset = PlaneStack<float>::zeros_like(out.offset_map);

  const double norm = std::max<std::size_t>(1, targets.centers.size());
  LossBreakdown loss;

  for (Eigen::Index i = 0; i < out.heatmap.data.size(); ++i) {
    const double y = std::clamp(static_cast<double>(out.heatmap.data(i)),
                                kProbClamp, 1.0 - kProbClamp);
    const double t = targets.heatmap.data(i);
    double l, dy;
    if (t >= 1.0) {
      const double miss = 1.0 - y;
      l = -miss * miss * std::log(y);
      dy = 2.0 * miss * std::log(y) - miss * miss / y;
    } else {
      const double damp = std::pow(1.0 - t, 4.0);
      l = -damp * y * y * std::log1p(-y);
      dy = -damp * (2.0 * y * std::log1p(-y) - y * y / (1.0 - y));
    }
    loss.heatmap += l / norm;
    d_heat.data(i) = static_cast<float>(dy / norm);
  }

  for (const TrainingTargets::CenterTarget& c : targets.centers) {
    const Eigen::Index col = out.size_map.index(c.cell_x, c.cell_y);
    const float target_sz[2] = {c.size_x, c.size_y};
    const float target_off[2] = {c.off_x, c.off_y};
    for (int k = 0; k < 2; ++k) {
      const double size_err = out.size_map.data(k, col) - target_sz[k];
      loss.size += cfg.size_loss_weight * std::abs(size_err) / norm;
      d_size.data(k, col) = static_cast<float>(
          cfg.size_loss_weight * (size_err > 0 ? 1.0 : (size_err < 0 ? -1.0 : 0.0)) / norm);
      const double off_err = out.offset_map.data(k, col) - target_off[k];
      loss.offset += cfg.offset_loss_weight * std::abs(off_err) / norm;
      d_offset.data(k, col) = static_cast<float>(
          cfg.offset_loss_weight * (off_err > 0 ? 1.0 : (off_err < 0 ? -1.0 : 0.0)) / norm);
    }
  }
  return loss;
}

}  // namespace

TrainingTargets make_training_targets(const GroundTruth& gt,
                                      const DetectorConfig& config) {
  const int hm = config.heatmap_size();
  const double R = config.downsample;
  TrainingTargets targets;
  targets.heatmap = Heatmap<float>(config.num_classes, hm, hm);

  for (const GroundTruthObject& obj : gt) {
    const double cx_cells = obj.center_x / R;
    const double cy_cells = obj.center_y / R;
    const int cell_x = std::clamp(static_cast<int>(cx_cells), 0, hm - 1);
    const int cell_y = std::clamp(static_cast<int>(cy_cells), 0, hm - 1);

    const double diag_cells = std::hypot(obj.width, obj.height) / R;
    const double sigma = std::max(1.0, diag_cells / 6.0);
    const int reach = static_cast<int>(std::ceil(3.0 * sigma));
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const int x = cell_x + dx, y = cell_y + dy;
        if (!targets.heatmap.contains(x, y)) continue;
        const float g = static_cast<float>(
            std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
        float& cell = targets.heatmap(obj.category, x, y);
        cell = std::max(cell, g);
      }
    }
    targets.heatmap(obj.category, cell_x, cell_y) = 1.0f;

    TrainingTargets::CenterTarget c;
    c.cell_x = cell_x;
    c.cell_y = cell_y;
    c.size_x = static_cast<float>(obj.width / R);
    c.size_y = static_cast<float>(obj.height / R);
    c.off_x = static_cast<float>(cx_cells - cell_x);
    c.off_y = static_cast<float>(cy_cells - cell_y);
    targets.centers.push_back(c);
  }
  return targets;
}

double evaluate_map(const KeypointNet<float>& net, const Dataset& dataset,
                    int threads) {
  std::vector<ImageEval> evals(dataset.samples.size());
  parallel_for(dataset.samples.size(), threads, [&](std::size_t i) {
    evals[i].detections = detect(net, dataset.samples[i].image).detections;
    evals[i].ground_truth = dataset.samples[i].ground_truth;
  });
  return mean_average_precision(evals, net.config().num_classes);
}

TrainResult train_detector(const Dataset& train_set, const Dataset& val_set,
                           const DetectorConfig& det_config,
                           const TrainConfig& config, std::uint64_t seed) {
  det_config.validate();
  config.validate();
  require(!train_set.samples.empty(), "train_detector: empty training dataset");
  require(!val_set.samples.empty(), "train_detector: empty validation dataset");
  for (const Dataset* ds : {&train_set, &val_set}) {
    require(ds->image_size == det_config.input_size,
            "train_detector: dataset image size does not match detector input");
    for (const Sample& s : ds->samples) {
      for (const GroundTruthObject& g : s.ground_truth) {
        require(g.category >= 0 && g.category < det_config.num_classes,
                "train_detector: label category out of range");
        require(g.width > 0 && g.height > 0, "train_detector: non-positive object size");
      }
    }
  }

  TrainResult result;
  result.net = KeypointNet<float>(det_config);
  Rng init_rng(derive_seed(seed, 1));
  result.net.init_weights(init_rng);

  std::vector<TrainingTargets> targets(train_set.samples.size());
  for (std::size_t i = 0; i < train_set.samples.size(); ++i) {
    targets[i] = make_training_targets(train_set.samples[i].ground_truth, det_config);
  }

  Adam opt(result.net.parameter_blocks(), config.learning_rate);
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  const int threads = resolve_thread_count(config.threads);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (epoch == config.decay_epoch) {
      opt.set_learning_rate(config.learning_rate * config.lr_decay);
    }
    // Fisher-Yates from the epoch stream
    Rng shuffle_rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }

    EpochStats stats;
    stats.epoch = epoch;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(config.batch_size, order.size() - start);

      std::vector<KeypointNet<float>::ParamGrads> grads(count);
      std::vector<LossBreakdown> losses(count);
      parallel_for(count, threads, [&](std::size_t k) {
        const Sample& sample = train_set.samples[order[start + k]];
        const TrainingTargets& target = targets[order[start + k]];
        KeypointNet<float>::Trace trace;
        const auto out = result.net.forward(sample.image, trace);
        Heatmap<float> d_heat;
        PlaneStack<float> d_size, d_offset;
        losses[k] = detector_loss(out, target, config, d_heat, d_size, d_offset);
        grads[k] = result.net.zero_param_grads();
        result.net.backward(trace, d_heat, d_size, d_offset, &grads[k]);
      });

      // reduce in index order, then average: deterministic under threading
      auto& total = grads[0];
      for (std::size_t k = 1; k < count; ++k) {
        for (std::size_t b = 0; b < total.blocks.size(); ++b) {
          total.blocks[b] += grads[k].blocks[b];
        }
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& block : total.blocks) block *= inv;
      opt.step(total.blocks);

      for (std::size_t k = 0; k < count; ++k) {
        stats.heatmap_loss += losses[k].heatmap / static_cast<double>(order.size());
        stats.size_loss += losses[k].size / static_cast<double>(order.size());
        stats.offset_loss += losses[k].offset / static_cast<double>(order.size());
      }
    }

    const bool last_epoch = epoch == config.epochs;
    if (last_epoch || epoch % config.eval_every == 0) {
      stats.val_map = evaluate_map(result.net, val_set, threads);
    }
    result.history.push_back(stats);
    if (stats.val_map >= config.early_stop_map) break;
  }

  result.final_map = result.history.back().val_map >= 0
                         ? result.history.back().val_map
                         : evaluate_map(result.net, val_set, threads);
  if (result.final_map < config.map_gate) {
    throw TrainingGateFailure(result.final_map, config.map_gate);
  }
  return result;
}

}  // namespace fla
