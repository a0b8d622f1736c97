#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fla {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A stack of equally sized raster planes stored channel-major: one row per
/// channel, one column per pixel, column index = y * width + x.
///
/// Images are PlaneStacks with 3 channels and values in [0, 1]; heatmaps are
/// PlaneStacks with one channel per object class at 1/R image resolution.
template <typename Scalar>
struct PlaneStack {
  MatrixX<Scalar> data;
  int width = 0;
  int height = 0;

  PlaneStack() = default;
  PlaneStack(int channels, int w, int h)
      : data(MatrixX<Scalar>::Zero(channels, static_cast<Eigen::Index>(w) * h)),
        width(w),
        height(h) {}

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }

  Eigen::Index index(int x, int y) const {
    return static_cast<Eigen::Index>(y) * width + x;
  }
  bool contains(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }

  Scalar operator()(int c, int x, int y) const { return data(c, index(x, y)); }
  Scalar& operator()(int c, int x, int y) { return data(c, index(x, y)); }

  bool same_shape(const PlaneStack& other) const {
    return width == other.width && height == other.height &&
           data.rows() == other.data.rows();
  }

  template <typename T>
  PlaneStack<T> cast() const {
    PlaneStack<T> out;
    out.data = data.template cast<T>();
    out.width = width;
    out.height = height;
    return out;
  }

  static PlaneStack zeros_like(const PlaneStack& other) {
    PlaneStack out;
    out.data = MatrixX<Scalar>::Zero(other.data.rows(), other.data.cols());
    out.width = other.width;
    out.height = other.height;
    return out;
  }
};

template <typename Scalar>
using Image = PlaneStack<Scalar>;  // 3 channels, pixel intensities in [0, 1]
template <typename Scalar>
using Heatmap = PlaneStack<Scalar>;  // C channels, per-class confidences in [0, 1]

using PlaneStackU8 = PlaneStack<std::uint8_t>;

template <typename Scalar>
void clamp01_inplace(PlaneStack<Scalar>& ps) {
  ps.data = ps.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

template <typename Scalar>
PlaneStack<Scalar> clamped01(PlaneStack<Scalar> ps) {
  clamp01_inplace(ps);
  return ps;
}

template <typename Scalar>
Scalar max_abs(const PlaneStack<Scalar>& ps) {
  return ps.data.size() == 0 ? Scalar(0) : ps.data.cwiseAbs().maxCoeff();
}

template <typename Scalar>
bool in_unit_range(const PlaneStack<Scalar>& ps) {
  return (ps.data.array() >= Scalar(0)).all() &&
         (ps.data.array() <= Scalar(1)).all();
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace fla
