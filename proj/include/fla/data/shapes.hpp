#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fla/core/detection.hpp"
#include "fla/core/types.hpp"

namespace fla {

enum class ShapeClass : int { circle = 0, square = 1, triangle = 2 };

inline constexpr int kNumShapeClasses = 3;

inline const char* shape_class_name(int category) {
  switch (category) {
    case 0: return "circle";
    case 1: return "square";
    case 2: return "triangle";
    default: return "unknown";
  }
}

struct SceneObject {
  ShapeClass shape = ShapeClass::circle;
  int center_x = 0, center_y = 0;  // image pixels
  int half_extent = 0;             // rendered bounding box is (2h+1) square
  std::array<std::uint8_t, 3> fill{};
};

struct BackgroundParams {
  std::uint64_t noise_seed = 0;
  int cell_size = 16;        // coarse value-noise lattice spacing
  int noise_amplitude = 10;  // per-pixel hash noise, +/- this many levels
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int image_size = 128;
  std::vector<SceneObject> objects;  // 1..5, mutually non-crowded
  BackgroundParams background;
};

struct Sample {
  Image<float> image;
  GroundTruth ground_truth;
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;
  int image_size = 0;
  std::vector<std::string> class_names;
};

/// Deterministically samples scene layout, colors and background for a seed.
SceneSpec sample_scene_spec(std::uint64_t seed, int image_size = 128);

/// Rasterizes a spec with pure integer arithmetic (no anti-aliasing), so the
/// rendered bytes are identical on every platform.
PlaneStackU8 render_scene(const SceneSpec& spec);

GroundTruth scene_ground_truth(const SceneSpec& spec);

/// generate_scene(seed): deterministic image + exactly matching labels.
Sample generate_scene(std::uint64_t seed, int image_size = 128);

Dataset generate_dataset(int count, std::uint64_t seed0, int image_size = 128);

/// On-disk layout: <dir>/manifest.json, <dir>/annotations.jsonl and
/// <dir>/images/*.ppm (8-bit binary PPM, lossless).
void write_dataset(const std::filesystem::path& dir, int count,
                   std::uint64_t seed0, int image_size = 128);

Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace fla
