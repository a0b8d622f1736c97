#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <vector>

#include "fla/core/types.hpp"

namespace fla {

/// Knobs of the localized attack. total_budget is the L-inf cap on the whole
/// perturbation; each iteration applies a masked sign step of size
/// total_budget / max_iterations.
struct AttackConfig {
  int attack_radius = 16;          // R*: half-side of each mask square, image px
  double total_budget = 16.0 / 255.0;  // L-inf budget
  int max_iterations = 50;
  int neighbor_radius = 1;         // Chebyshev radius in heatmap cells
  double refresh_threshold = 0.1;  // drop a target once its confidence falls below
  double peak_threshold = 0.3;     // inherited from the detector config

  void validate() const {
    require(attack_radius >= 0, "AttackConfig: attack_radius must be >= 0");
    require(total_budget > 0.0, "AttackConfig: total_budget must be > 0");
    require(max_iterations >= 1, "AttackConfig: max_iterations must be >= 1");
    require(neighbor_radius >= 0, "AttackConfig: neighbor_radius must be >= 0");
    require(refresh_threshold > 0.0 && refresh_threshold < 1.0,
            "AttackConfig: refresh_threshold must be in (0,1)");
  }
};

struct TargetPoint {
  int x = 0, y = 0;  // heatmap cell
  int category = 0;
  bool is_neighbor = false;

  friend bool operator==(const TargetPoint& a, const TargetPoint& b) {
    return a.x == b.x && a.y == b.y && a.category == b.category;
  }
};

/// Set of heatmap points under attack, deduplicated by (coords, category)
/// and kept in deterministic (y, x, category) order.
class TargetPointSet {
 public:
  TargetPointSet() = default;

  /// Inserts unless an equal (coords, category) entry exists; an original
  /// point is never downgraded to a neighbor.
  void add(const TargetPoint& p) {
    auto it = std::lower_bound(points_.begin(), points_.end(), p, before);
    if (it != points_.end() && *it == p) {
      if (!p.is_neighbor) it->is_neighbor = false;
      return;
    }
    points_.insert(it, p);
  }

  bool contains(const TargetPoint& p) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), p, before);
    return it != points_.end() && *it == p;
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }
  const std::vector<TargetPoint>& points() const { return points_; }

 private:
  static bool before(const TargetPoint& a, const TargetPoint& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.category < b.category;
  }

  std::vector<TargetPoint> points_;
};

/// Binary image-resolution mask restricting where perturbation may land.
struct AttackMask {
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> data;  // h x w

  int width() const { return static_cast<int>(data.cols()); }
  int height() const { return static_cast<int>(data.rows()); }
  bool at(int x, int y) const { return data(y, x) != 0; }
  Eigen::Index area() const { return (data != 0).count(); }
  double area_fraction() const {
    return data.size() == 0 ? 0.0
                            : static_cast<double>(area()) / static_cast<double>(data.size());
  }

  /// Mask as one row of 0/1 scalars in pixel-column order, broadcastable
  /// over the channel rows of a PlaneStack.
  template <typename Scalar>
  RowVectorX<Scalar> flat_row() const {
    RowVectorX<Scalar> row(data.size());
    for (int y = 0; y < height(); ++y) {
      for (int x = 0; x < width(); ++x) {
        row(static_cast<Eigen::Index>(y) * width() + x) = Scalar(data(y, x) != 0 ? 1 : 0);
      }
    }
    return row;
  }
};

template <typename Scalar>
struct Perturbation {
  Image<Scalar> data;        // adversarial minus clean, zero outside masks
  int iterations_used = 0;
};

struct AttackTraceRow {
  int iteration = 0;
  int remaining_targets = 0;
  double mask_area_fraction = 0;
  std::vector<double> loss_by_category;          // NaN for absent categories
  std::vector<double> grad_max_abs_by_category;  // post-normalization, 0 or 1
};

struct AttackTrace {
  std::vector<AttackTraceRow> rows;
  bool success = false;

  void write_csv(std::ostream& out, int num_classes) const;
};

}  // namespace fla
