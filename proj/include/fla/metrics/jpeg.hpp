#pragma once

#include <cstdint>
#include <vector>

#include "fla/core/image_io.hpp"
#include "fla/core/types.hpp"

namespace fla {

/// In-memory JPEG codec (libjpeg). quality must be in [1, 100]; codec
/// failures surface as std::runtime_error.
std::vector<std::uint8_t> jpeg_encode(const PlaneStackU8& image, int quality);
PlaneStackU8 jpeg_decode(const std::vector<std::uint8_t>& bytes);

/// Save/reload protocol used for black-box evaluation: quantize to 8 bit,
/// encode at the given quality, decode back to [0, 1].
template <typename Scalar>
Image<Scalar> jpeg_roundtrip(const Image<Scalar>& image, int quality) {
  return dequantize_u8<Scalar>(jpeg_decode(jpeg_encode(quantize_u8(image), quality)));
}

}  // namespace fla
