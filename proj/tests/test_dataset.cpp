#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fla/data/shapes.hpp"

using namespace fla;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("same seed renders bit-identical image and labels") {
  const Sample a = generate_scene(123, 128);
  const Sample b = generate_scene(123, 128);
  CHECK((a.image.data == b.image.data));
  REQUIRE(a.ground_truth.size() == b.ground_truth.size());
  for (std::size_t i = 0; i < a.ground_truth.size(); ++i) {
    CHECK(a.ground_truth[i].center_x == b.ground_truth[i].center_x);
    CHECK(a.ground_truth[i].category == b.ground_truth[i].category);
  }
  const Sample c = generate_scene(124, 128);
  CHECK((a.image.data != c.image.data));
}

TEST_CASE("scene invariants: 1..5 objects, inside image, spaced centers") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SceneSpec spec = sample_scene_spec(seed, 128);
    REQUIRE(spec.objects.size() >= 1);
    REQUIRE(spec.objects.size() <= 5);
    for (const SceneObject& o : spec.objects) {
      CHECK(o.center_x - o.half_extent >= 0);
      CHECK(o.center_x + o.half_extent < 128);
      CHECK(o.center_y - o.half_extent >= 0);
      CHECK(o.center_y + o.half_extent < 128);
    }
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      for (std::size_t j = i + 1; j < spec.objects.size(); ++j) {
        const double dx = spec.objects[i].center_x - spec.objects[j].center_x;
        const double dy = spec.objects[i].center_y - spec.objects[j].center_y;
        const double max_size =
            2 * std::max(spec.objects[i].half_extent, spec.objects[j].half_extent) + 1;
        CHECK(std::sqrt(dx * dx + dy * dy) >= max_size / 2);
      }
    }
  }
}

TEST_CASE("class frequencies are near-uniform over many seeds") {
  int counts[kNumShapeClasses] = {0, 0, 0};
  int total = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    for (const SceneObject& o : sample_scene_spec(seed, 128).objects) {
      counts[static_cast<int>(o.shape)]++;
      ++total;
    }
  }
  for (int c = 0; c < kNumShapeClasses; ++c) {
    const double freq = static_cast<double>(counts[c]) / total;
    CHECK(freq > 0.28);
    CHECK(freq < 0.39);
  }
}

TEST_CASE("ground-truth boxes exactly bound the rendered shape pixels") {
  for (std::uint64_t seed = 1000; seed < 1030; ++seed) {
    const SceneSpec spec = sample_scene_spec(seed, 128);
    if (spec.objects.size() != 1) continue;  // overlap-free oracle needs one object
    const SceneObject& o = spec.objects[0];
    const PlaneStackU8 img = render_scene(spec);

    // rasterize a background-only twin and diff to find shape pixels
    SceneSpec bg_only = spec;
    bg_only.objects.clear();
    bg_only.objects.push_back(o);
    bg_only.objects[0].center_x = -1000;  // move the object out of frame
    const PlaneStackU8 bg = render_scene(bg_only);

    int x_min = 128, x_max = -1, y_min = 128, y_max = -1;
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        if ((img.data.col(img.index(x, y)).array() != bg.data.col(bg.index(x, y)).array())
                .any()) {
          x_min = std::min(x_min, x);
          x_max = std::max(x_max, x);
          y_min = std::min(y_min, y);
          y_max = std::max(y_max, y);
        }
      }
    }
    const GroundTruth gt = scene_ground_truth(spec);
    REQUIRE(gt.size() == 1);
    const Box box = gt[0].box();
    CHECK(box.x_min <= x_min);
    CHECK(box.x_max >= x_max);
    CHECK(box.y_min <= y_min);
    CHECK(box.y_max >= y_max);
    // and the box is tight for squares/triangles/circles along their extremes
    CHECK(x_max - x_min + 1 == doctest::Approx(gt[0].width).epsilon(0.1));
  }
}

TEST_CASE("dataset write/read round-trip reproduces pixels and labels") {
  const auto dir = temp_dir("fla_test_dataset_rt");
  write_dataset(dir, 10, 77, 128);
  const Dataset ds = read_dataset(dir);
  REQUIRE(ds.samples.size() == 10);
  CHECK(ds.image_size == 128);
  REQUIRE(ds.class_names.size() == 3);

  const Dataset reference = generate_dataset(10, 77, 128);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK((ds.samples[i].image.data == reference.samples[i].image.data));
    REQUIRE(ds.samples[i].ground_truth.size() == reference.samples[i].ground_truth.size());
    for (std::size_t k = 0; k < ds.samples[i].ground_truth.size(); ++k) {
      CHECK(ds.samples[i].ground_truth[k].center_x ==
            reference.samples[i].ground_truth[k].center_x);
      CHECK(ds.samples[i].ground_truth[k].width ==
            reference.samples[i].ground_truth[k].width);
      CHECK(ds.samples[i].ground_truth[k].category ==
            reference.samples[i].ground_truth[k].category);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty dataset is valid") {
  const auto dir = temp_dir("fla_test_dataset_empty");
  write_dataset(dir, 0, 1, 128);
  const Dataset ds = read_dataset(dir);
  CHECK(ds.samples.empty());
  CHECK(ds.image_size == 128);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt annotation line reports its line number") {
  const auto dir = temp_dir("fla_test_dataset_corrupt");
  write_dataset(dir, 3, 5, 128);
  {
    std::ofstream ann(dir / "annotations.jsonl", std::ios::app);
    ann << "{ not json\n";
  }
  // manifest says 3 records; the bad 4th line must be reported by number
  try {
    read_dataset(dir);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":4:") != std::string::npos);
    CHECK(msg.find("parse error") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated annotations are detected against the manifest") {
  const auto dir = temp_dir("fla_test_dataset_trunc");
  write_dataset(dir, 3, 5, 128);
  {
    std::ifstream in(dir / "annotations.jsonl");
    std::string first_line;
    std::getline(in, first_line);
    in.close();
    std::ofstream out(dir / "annotations.jsonl", std::ios::trunc);
    out << first_line << "\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir),
                       doctest::Contains("truncated"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing manifest is an explicit error") {
  const auto dir = temp_dir("fla_test_dataset_missing");
  CHECK_THROWS_AS(read_dataset(dir), std::runtime_error);
}
