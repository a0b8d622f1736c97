#include "fla/data/shapes.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fla/core/image_io.hpp"
#include "fla/core/rng.hpp"

namespace fla {
namespace {

using nlohmann::json;

// splitmix64-style integer hash; the only randomness in the renderer, so
// rendered pixels are identical on every platform.
std::uint64_t mix_hash(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t cell_hash(std::uint64_t seed, int gx, int gy, int channel) {
  return mix_hash(seed ^ (static_cast<std::uint64_t>(gx) << 40) ^
                  (static_cast<std::uint64_t>(gy) << 20) ^
                  static_cast<std::uint64_t>(channel));
}

// Coarse lattice level in [40, 200].
int lattice_level(const BackgroundParams& bg, int gx, int gy, int channel) {
  return 40 + static_cast<int>(cell_hash(bg.noise_seed, gx, gy, channel) % 161);
}

// Bilinear interpolation of the lattice in fixed-point integer arithmetic,
// plus per-pixel hash noise. Result in [0, 255].
int background_level(const BackgroundParams& bg, int x, int y, int channel) {
  const int cs = bg.cell_size;
  const int gx = x / cs, gy = y / cs;
  const int fx = x % cs, fy = y % cs;
  const int v00 = lattice_level(bg, gx, gy, channel);
  const int v10 = lattice_level(bg, gx + 1, gy, channel);
  const int v01 = lattice_level(bg, gx, gy + 1, channel);
  const int v11 = lattice_level(bg, gx + 1, gy + 1, channel);
  // value * cs^2 scale, then divide once
  const int top = v00 * (cs - fx) + v10 * fx;
  const int bot = v01 * (cs - fx) + v11 * fx;
  int level = (top * (cs - fy) + bot * fy) / (cs * cs);
  const std::uint64_t h =
      mix_hash(bg.noise_seed ^ 0x5bf03d8ab71f07c1ULL ^
               (static_cast<std::uint64_t>(y) << 32) ^
               (static_cast<std::uint64_t>(x) << 8) ^
               static_cast<std::uint64_t>(channel));
  level += static_cast<int>(h % (2 * bg.noise_amplitude + 1)) - bg.noise_amplitude;
  return std::clamp(level, 0, 255);
}

bool inside_shape(const SceneObject& o, int x, int y) {
  const int dx = x - o.center_x;
  const int dy = y - o.center_y;
  const int a = o.half_extent;
  switch (o.shape) {
    case ShapeClass::circle:
      return dx * dx + dy * dy <= a * a;
    case ShapeClass::square:
      return std::abs(dx) <= a && std::abs(dy) <= a;
    case ShapeClass::triangle:
      // apex-up isoceles triangle with vertices (0,-a), (-a,a), (a,a),
      // relative to the center; integer edge functions, edges inclusive
      return dy <= a && 2 * dx <= dy + a && -2 * dx <= dy + a;
  }
  return false;
}

}  // namespace

SceneSpec sample_scene_spec(std::uint64_t seed, int image_size) {
  require(image_size >= 48, "sample_scene_spec: image_size too small");
  SceneSpec spec;
  spec.seed = seed;
  spec.image_size = image_size;
  Rng rng(derive_seed(seed, 0xd5));
  spec.background.noise_seed = rng.next_u64();
  spec.background.cell_size = 16;
  spec.background.noise_amplitude = 10;

  const int target_count = static_cast<int>(rng.uniform_int(1, 5));
  const int margin = 2;
  for (int k = 0; k < target_count; ++k) {
    SceneObject obj;
    obj.shape = static_cast<ShapeClass>(rng.uniform_int(0, kNumShapeClasses - 1));
    obj.half_extent = static_cast<int>(rng.uniform_int(8, 20));
    for (int c = 0; c < 3; ++c) {
      // keep fills away from mid-gray background and from the [0,1] clamp rails
      const bool dark = rng.uniform() < 0.5;
      obj.fill[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(
          dark ? rng.uniform_int(30, 95) : rng.uniform_int(160, 225));
    }
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int lo = obj.half_extent + margin;
      const int hi = image_size - 1 - obj.half_extent - margin;
      obj.center_x = static_cast<int>(rng.uniform_int(lo, hi));
      obj.center_y = static_cast<int>(rng.uniform_int(lo, hi));
      placed = true;
      for (const SceneObject& other : spec.objects) {
        const long dx = obj.center_x - other.center_x;
        const long dy = obj.center_y - other.center_y;
        const long max_size = 2 * std::max(obj.half_extent, other.half_extent) + 1;
        // pairwise center distance >= max size / 2 (in squared form)
        if (4 * (dx * dx + dy * dy) < max_size * max_size) {
          placed = false;
          break;
        }
      }
    }
    if (placed) spec.objects.push_back(obj);
  }
  if (spec.objects.empty()) {
    // target_count >= 1 and the first placement is unconstrained, so this
    // only guards against future parameter changes
    SceneObject obj;
    obj.shape = ShapeClass::circle;
    obj.half_extent = 10;
    obj.center_x = obj.center_y = image_size / 2;
    obj.fill = {200, 60, 60};
    spec.objects.push_back(obj);
  }
  return spec;
}

PlaneStackU8 render_scene(const SceneSpec& spec) {
  PlaneStackU8 img;
  img.width = spec.image_size;
  img.height = spec.image_size;
  img.data.resize(3, static_cast<Eigen::Index>(spec.image_size) * spec.image_size);
  for (int y = 0; y < spec.image_size; ++y) {
    for (int x = 0; x < spec.image_size; ++x) {
      const Eigen::Index col = img.index(x, y);
      const SceneObject* hit = nullptr;
      for (const SceneObject& o : spec.objects) {
        if (inside_shape(o, x, y)) hit = &o;  // later objects draw on top
      }
      for (int c = 0; c < 3; ++c) {
        img.data(c, col) =
            hit ? hit->fill[static_cast<std::size_t>(c)]
                : static_cast<std::uint8_t>(background_level(spec.background, x, y, c));
      }
    }
  }
  return img;
}

GroundTruth scene_ground_truth(const SceneSpec& spec) {
  GroundTruth gt;
  gt.reserve(spec.objects.size());
  for (const SceneObject& o : spec.objects) {
    GroundTruthObject g;
    g.center_x = o.center_x;
    g.center_y = o.center_y;
    g.width = 2 * o.half_extent + 1;
    g.height = 2 * o.half_extent + 1;
    g.category = static_cast<int>(o.shape);
    gt.push_back(g);
  }
  return gt;
}

Sample generate_scene(std::uint64_t seed, int image_size) {
  const SceneSpec spec = sample_scene_spec(seed, image_size);
  Sample s;
  s.image = dequantize_u8<float>(render_scene(spec));
  s.ground_truth = scene_ground_truth(spec);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seed_%llu", static_cast<unsigned long long>(seed));
  s.id = buf;
  return s;
}

Dataset generate_dataset(int count, std::uint64_t seed0, int image_size) {
  Dataset ds;
  ds.image_size = image_size;
  for (int c = 0; c < kNumShapeClasses; ++c) ds.class_names.push_back(shape_class_name(c));
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ds.samples.push_back(generate_scene(seed0 + static_cast<std::uint64_t>(i), image_size));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& dir, int count,
                   std::uint64_t seed0, int image_size) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");

  json manifest;
  manifest["format_version"] = 1;
  manifest["seed0"] = seed0;
  manifest["n"] = count;
  manifest["image_size"] = image_size;
  manifest["class_names"] = json::array();
  for (int c = 0; c < kNumShapeClasses; ++c) manifest["class_names"].push_back(shape_class_name(c));
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << "\n";

  std::ofstream ann(dir / "annotations.jsonl");
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(i);
    const SceneSpec spec = sample_scene_spec(seed, image_size);
    char name[40];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
    write_ppm(dir / "images" / name, render_scene(spec));

    json rec;
    rec["image"] = std::string("images/") + name;
    rec["objects"] = json::array();
    for (const GroundTruthObject& g : scene_ground_truth(spec)) {
      rec["objects"].push_back({{"category", g.category},
                                {"center", {g.center_x, g.center_y}},
                                {"size", {g.width, g.height}}});
    }
    ann << rec.dump() << "\n";
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("read_dataset: missing manifest " + manifest_path.string());
  }
  std::ifstream mf(manifest_path);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("read_dataset: bad manifest: " + std::string(e.what()));
  }

  Dataset ds;
  ds.image_size = manifest.at("image_size").get<int>();
  ds.class_names = manifest.at("class_names").get<std::vector<std::string>>();

  const fs::path ann_path = dir / "annotations.jsonl";
  std::ifstream ann(ann_path);
  if (!ann) {
    throw std::runtime_error("read_dataset: missing annotations " + ann_path.string());
  }
  std::string line;
  int line_no = 0;
  while (std::getline(ann, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      Sample s;
      s.id = rec.at("image").get<std::string>();
      s.image = dequantize_u8<float>(read_ppm(dir / s.id));
      for (const json& jo : rec.at("objects")) {
        GroundTruthObject g;
        g.category = jo.at("category").get<int>();
        g.center_x = jo.at("center").at(0).get<double>();
        g.center_y = jo.at("center").at(1).get<double>();
        g.width = jo.at("size").at(0).get<double>();
        g.height = jo.at("size").at(1).get<double>();
        s.ground_truth.push_back(g);
      }
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      std::ostringstream msg;
      msg << "read_dataset: " << ann_path.string() << ":" << line_no
          << ": parse error: " << e.what();
      throw std::runtime_error(msg.str());
    }
  }
  const int expected = manifest.at("n").get<int>();
  if (static_cast<int>(ds.samples.size()) != expected) {
    std::ostringstream msg;
    msg << "read_dataset: " << ann_path.string() << ": expected " << expected
        << " records, found " << ds.samples.size() << " (file truncated after line "
        << line_no << ")";
    throw std::runtime_error(msg.str());
  }
  return ds;
}

}  // namespace fla
