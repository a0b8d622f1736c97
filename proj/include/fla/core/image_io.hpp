#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>

#include "fla/core/types.hpp"

namespace fla {

/// Binary PPM (P6), 8-bit. Lossless and trivially bit-reproducible.
void write_ppm(const std::filesystem::path& path, const PlaneStackU8& image);
PlaneStackU8 read_ppm(const std::filesystem::path& path);

template <typename Scalar>
PlaneStackU8 quantize_u8(const PlaneStack<Scalar>& image) {
  PlaneStackU8 out;
  out.width = image.width;
  out.height = image.height;
  out.data.resize(image.data.rows(), image.data.cols());
  for (Eigen::Index i = 0; i < image.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.data(i)), 0.0, 1.0);
    out.data(i) = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

template <typename Scalar>
PlaneStack<Scalar> dequantize_u8(const PlaneStackU8& image) {
  PlaneStack<Scalar> out;
  out.width = image.width;
  out.height = image.height;
  out.data = image.data.template cast<Scalar>() / Scalar(255);
  return out;
}

/// Perturbations live in [-1, 1]; exported 8-bit with 0 mapped to 128.
template <typename Scalar>
PlaneStackU8 quantize_signed_u8(const PlaneStack<Scalar>& delta) {
  PlaneStackU8 out;
  out.width = delta.width;
  out.height = delta.height;
  out.data.resize(delta.data.rows(), delta.data.cols());
  for (Eigen::Index i = 0; i < delta.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(delta.data(i)), -1.0, 1.0);
    const long q = std::lround(128.0 + v * 127.0);
    out.data(i) = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  }
  return out;
}

}  // namespace fla
