#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fla/core/rng.hpp"
#include "fla/data/shapes.hpp"
#include "fla/detector/checkpoint.hpp"
#include "fla/detector/decode.hpp"
#include "fla/detector/net.hpp"
#include "fla/detector/train.hpp"

using namespace fla;

namespace {

DetectorConfig tiny_config(bool context = true) {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.stage_channels = {8, 12, 16, 24, 16, 12};
  cfg.global_context = context;
  return cfg;
}

template <typename Scalar>
KeypointNet<Scalar> random_net(const DetectorConfig& cfg, std::uint64_t seed) {
  KeypointNet<float> net(cfg);
  Rng rng(seed);
  net.init_weights(rng);
  return net.template cast<Scalar>();
}

template <typename Scalar>
Image<Scalar> random_image(int size, std::uint64_t seed) {
  Image<Scalar> img(3, size, size);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    img.data(i) = static_cast<Scalar>(rng.uniform(0.05, 0.95));
  }
  return img;
}

double sum_of_heatmap(const KeypointNet<double>& net, const Image<double>& img) {
  return net.forward(img).heatmap.data.sum();
}

}  // namespace

TEST_CASE("forward shapes, range and input validation") {
  const auto net = random_net<float>(tiny_config(), 1);
  const auto img = random_image<float>(64, 2);
  const auto out = net.forward(img);
  CHECK(out.heatmap.width == 16);
  CHECK(out.heatmap.height == 16);
  CHECK(out.heatmap.channels() == 3);
  CHECK(out.size_map.channels() == 2);
  CHECK(out.offset_map.channels() == 2);
  CHECK(in_unit_range(out.heatmap));
  CHECK(out.size_map.data.allFinite());
  CHECK(out.offset_map.data.allFinite());

  const Image<float> zero(3, 64, 64);
  CHECK(in_unit_range(net.forward(zero).heatmap));

  const Image<float> wrong(3, 32, 32);
  CHECK_THROWS_AS(net.forward(wrong), std::invalid_argument);
}

TEST_CASE("forward is deterministic for fixed weights and image") {
  const auto net = random_net<float>(tiny_config(), 3);
  const auto img = random_image<float>(64, 4);
  const auto a = net.forward(img);
  const auto b = net.forward(img);
  CHECK((a.heatmap.data == b.heatmap.data));
  CHECK((a.size_map.data == b.size_map.data));
}

TEST_CASE("seeded init gives bit-identical weights") {
  DetectorConfig cfg = tiny_config();
  KeypointNet<float> a(cfg), b(cfg);
  Rng ra(10), rb(10);
  a.init_weights(ra);
  b.init_weights(rb);
  auto ba = a.parameter_blocks();
  auto bb = b.parameter_blocks();
  REQUIRE(ba.size() == bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK((*ba[i] == *bb[i]));
}

TEST_CASE("backprop image gradient of sum-of-heatmap matches finite differences") {
  const auto net = random_net<double>(tiny_config(), 5);
  auto img = random_image<double>(64, 6);

  KeypointNet<double>::Trace trace;
  const auto out = net.forward(img, trace);
  Heatmap<double> d_heat = Heatmap<double>::zeros_like(out.heatmap);
  d_heat.data.setOnes();  // d(sum)/d(heatmap) = 1
  const PlaneStack<double> d_zero2(2, out.size_map.width, out.size_map.height);
  const Image<double> grad = net.backward(trace, d_heat, d_zero2, d_zero2);

  Rng rng(7);
  const double h = 1e-3;
  for (int trial = 0; trial < 10; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(0, 2));
    const int x = static_cast<int>(rng.uniform_int(0, 63));
    const int y = static_cast<int>(rng.uniform_int(0, 63));
    const double saved = img(c, x, y);
    img(c, x, y) = saved + h;
    const double plus = sum_of_heatmap(net, img);
    img(c, x, y) = saved - h;
    const double minus = sum_of_heatmap(net, img);
    img(c, x, y) = saved;
    const double fd = (plus - minus) / (2 * h);
    const double bp = grad(c, x, y);
    const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-8});
    CHECK(rel < 1e-2);
  }
}

TEST_CASE("image gradient is exactly zero outside the conv receptive field") {
  const auto net = random_net<double>(tiny_config(/*context=*/false), 8);
  const auto img = random_image<double>(64, 9);

  KeypointNet<double>::Trace trace;
  const auto out = net.forward(img, trace);
  // single target cell: gradient support must stay inside its preimage
  const int cx = 3, cy = 12;
  Heatmap<double> d_heat = Heatmap<double>::zeros_like(out.heatmap);
  d_heat(1, cx, cy) = 1.0;
  const PlaneStack<double> d_zero2(2, out.size_map.width, out.size_map.height);
  const Image<double> grad = net.backward(trace, d_heat, d_zero2, d_zero2);

  const auto support = net.input_support(cx, cy);
  REQUIRE_FALSE(support.full_image);
  int nonzero_inside = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const bool inside = x >= support.x_min && x <= support.x_max &&
                          y >= support.y_min && y <= support.y_max;
      for (int c = 0; c < 3; ++c) {
        if (!inside) {
          CHECK(grad(c, x, y) == 0.0);
        } else if (grad(c, x, y) != 0.0) {
          ++nonzero_inside;
        }
      }
    }
  }
  CHECK(nonzero_inside > 0);
}

TEST_CASE("global context couples every pixel to the heatmap") {
  const auto net = random_net<double>(tiny_config(/*context=*/true), 8);
  const auto support = net.input_support(0, 0);
  CHECK(support.full_image);

  const auto img = random_image<double>(64, 9);
  KeypointNet<double>::Trace trace;
  const auto out = net.forward(img, trace);
  Heatmap<double> d_heat = Heatmap<double>::zeros_like(out.heatmap);
  d_heat(0, 0, 0) = 1.0;
  const PlaneStack<double> d_zero2(2, out.size_map.width, out.size_map.height);
  const Image<double> grad = net.backward(trace, d_heat, d_zero2, d_zero2);
  // far corner still receives gradient through the pooled descriptor
  CHECK(grad(0, 63, 63) != 0.0);
}

TEST_CASE("decode: hand-computed single-peak oracle") {
  DetectorConfig cfg = tiny_config();
  Heatmap<float> heat(3, 16, 16);
  PlaneStack<float> size_map(2, 16, 16), offset_map(2, 16, 16);
  heat(2, 5, 5) = 0.9f;
  size_map(0, 5, 5) = 2.0f;  // 2 cells * R=4 -> 8 px
  size_map(1, 5, 5) = 2.0f;

  const DetectionSet dets = decode_detections(heat, size_map, offset_map, cfg, 0.3);
  REQUIRE(dets.detections.size() == 1);
  const Detection& d = dets.detections[0];
  CHECK(d.category == 2);
  CHECK(d.score == doctest::Approx(0.9));
  CHECK(d.center_x == 5);
  CHECK(d.center_y == 5);
  CHECK((d.box.x_min + d.box.x_max) / 2 == doctest::Approx(20.0));
  CHECK((d.box.y_min + d.box.y_max) / 2 == doctest::Approx(20.0));
  CHECK(d.box.width() == doctest::Approx(8.0));
  CHECK(d.box.height() == doctest::Approx(8.0));
}

TEST_CASE("decode: all-zero heatmap yields empty set") {
  DetectorConfig cfg = tiny_config();
  Heatmap<float> heat(3, 16, 16);
  PlaneStack<float> aux(2, 16, 16);
  CHECK(decode_detections(heat, aux, aux, cfg, 0.3).detections.empty());
}

TEST_CASE("decode: adjacent cells in one window yield a single detection") {
  DetectorConfig cfg = tiny_config();
  Heatmap<float> heat(3, 16, 16);
  PlaneStack<float> size_map(2, 16, 16), offset_map(2, 16, 16);
  size_map.data.setConstant(2.0f);
  heat(0, 5, 5) = 0.9f;
  heat(0, 6, 5) = 0.8f;  // not a local max next to 0.9
  const DetectionSet dets = decode_detections(heat, size_map, offset_map, cfg, 0.3);
  REQUIRE(dets.detections.size() == 1);
  CHECK(dets.detections[0].center_x == 5);
}

TEST_CASE("decode is invariant to sub-threshold background constants") {
  DetectorConfig cfg = tiny_config();
  Heatmap<float> heat(3, 16, 16);
  PlaneStack<float> size_map(2, 16, 16), offset_map(2, 16, 16);
  size_map.data.setConstant(2.0f);
  heat(1, 8, 8) = 0.7f;
  const DetectionSet before = decode_detections(heat, size_map, offset_map, cfg, 0.3);

  // lift background cells far from the peak's 3x3 window by a constant < threshold
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (std::max(std::abs(x - 8), std::abs(y - 8)) > 2) {
        for (int c = 0; c < 3; ++c) heat(c, x, y) += 0.25f;
      }
    }
  }
  const DetectionSet after = decode_detections(heat, size_map, offset_map, cfg, 0.3);
  REQUIRE(after.detections.size() == before.detections.size());
  CHECK(after.detections[0].center_x == before.detections[0].center_x);
  CHECK(after.detections[0].score == doctest::Approx(before.detections[0].score));
}

TEST_CASE("decode caps at max_detections, sorted by score") {
  DetectorConfig cfg = tiny_config();
  cfg.max_detections = 3;
  Heatmap<float> heat(3, 16, 16);
  PlaneStack<float> size_map(2, 16, 16), offset_map(2, 16, 16);
  size_map.data.setConstant(2.0f);
  heat(0, 2, 2) = 0.9f;
  heat(0, 6, 2) = 0.5f;
  heat(0, 10, 2) = 0.7f;
  heat(0, 14, 2) = 0.6f;
  heat(1, 2, 10) = 0.8f;
  const DetectionSet dets = decode_detections(heat, size_map, offset_map, cfg, 0.3);
  REQUIRE(dets.detections.size() == 3);
  CHECK(dets.detections[0].score == doctest::Approx(0.9));
  CHECK(dets.detections[1].score == doctest::Approx(0.8));
  CHECK(dets.detections[2].score == doctest::Approx(0.7));
}

TEST_CASE("category_at_point argmax, tie-break and bounds") {
  Heatmap<float> heat(3, 8, 8);
  heat(0, 2, 3) = 0.1f;
  heat(1, 2, 3) = 0.7f;
  heat(2, 2, 3) = 0.2f;
  auto [cat, conf] = category_at_point(heat, 2, 3);
  CHECK(cat == 1);
  CHECK(conf == doctest::Approx(0.7));

  heat(0, 4, 4) = 0.5f;
  heat(1, 4, 4) = 0.5f;
  heat(2, 4, 4) = 0.5f;
  auto [tie_cat, tie_conf] = category_at_point(heat, 4, 4);
  CHECK(tie_cat == 0);
  CHECK(tie_conf == doctest::Approx(0.5));

  CHECK_THROWS_AS(category_at_point(heat, 8, 0), std::out_of_range);
  CHECK_THROWS_AS(category_at_point(heat, 0, -1), std::out_of_range);
}

TEST_CASE("checkpoint round-trip preserves weights and config") {
  const auto net = random_net<float>(tiny_config(), 20);
  const auto path = std::filesystem::temp_directory_path() / "fla_test_ckpt.bin";
  save_checkpoint(path, net);
  const KeypointNet<float> back = load_checkpoint(path);
  CHECK(back.config() == net.config());
  auto ba = net.parameter_blocks();
  auto bb = back.parameter_blocks();
  REQUIRE(ba.size() == bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK((*ba[i] == *bb[i]));

  const auto img = random_image<float>(64, 21);
  CHECK((net.forward(img).heatmap.data == back.forward(img).heatmap.data));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption and truncation are rejected") {
  const auto net = random_net<float>(tiny_config(), 22);
  const auto path = std::filesystem::temp_directory_path() / "fla_test_ckpt_bad.bin";
  save_checkpoint(path, net);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(64);
  const char junk = 0x5a;
  f.write(&junk, 1);
  f.close();
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("training targets: splats peak at centers, sizes in cells") {
  DetectorConfig cfg = tiny_config();
  GroundTruth gt = {{32.0, 32.0, 17.0, 17.0, 1}};
  const TrainingTargets targets = make_training_targets(gt, cfg);
  CHECK(targets.heatmap(1, 8, 8) == 1.0f);
  CHECK(targets.heatmap(0, 8, 8) == 0.0f);
  CHECK(targets.heatmap(1, 7, 8) > 0.0f);
  CHECK(targets.heatmap(1, 7, 8) < 1.0f);
  REQUIRE(targets.centers.size() == 1);
  CHECK(targets.centers[0].cell_x == 8);
  CHECK(targets.centers[0].size_x == doctest::Approx(17.0 / 4.0));
}

TEST_CASE("train_detector rejects empty datasets") {
  DetectorConfig cfg = tiny_config();
  TrainConfig tc;
  Dataset empty;
  empty.image_size = 64;
  Dataset val = generate_dataset(2, 1, 64);
  CHECK_THROWS_AS(train_detector(empty, val, cfg, tc, 1), std::invalid_argument);
}

TEST_CASE("train_detector fails the gate explicitly with the final metric") {
  DetectorConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 1;
  tc.map_gate = 0.99;  // unreachable in one epoch on four images
  tc.eval_every = 1;
  tc.threads = 1;
  Dataset train = generate_dataset(4, 10, 64);
  Dataset val = generate_dataset(2, 50, 64);
  try {
    train_detector(train, val, cfg, tc, 3);
    FAIL("expected TrainingGateFailure");
  } catch (const TrainingGateFailure& e) {
    CHECK(e.gate == doctest::Approx(0.99));
    CHECK(e.achieved_map < 0.99);
    CHECK(e.achieved_map >= 0.0);
  }
}

TEST_CASE("training is deterministic: same seed, same weights") {
  DetectorConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.map_gate = 0.0;
  tc.early_stop_map = 2.0;  // never early-stop
  tc.threads = 2;           // determinism must hold under threading
  Dataset train = generate_dataset(8, 100, 64);
  Dataset val = generate_dataset(2, 200, 64);

  const TrainResult a = train_detector(train, val, cfg, tc, 7);
  const TrainResult b = train_detector(train, val, cfg, tc, 7);
  auto ba = a.net.parameter_blocks();
  auto bb = b.net.parameter_blocks();
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK((*ba[i] == *bb[i]));

  const TrainResult c = train_detector(train, val, cfg, tc, 8);
  bool any_diff = false;
  auto bc = c.net.parameter_blocks();
  for (std::size_t i = 0; i < ba.size() && !any_diff; ++i) {
    any_diff = (*ba[i] != *bc[i]);
  }
  CHECK(any_diff);
}

TEST_CASE("short training run learns the toy task above chance") {
  DetectorConfig cfg = tiny_config();
  TrainConfig tc;
  tc.epochs = 20;
  tc.map_gate = 0.0;
  tc.early_stop_map = 0.85;
  tc.eval_every = 4;
  Dataset train = generate_dataset(150, 1000, 64);
  Dataset val = generate_dataset(40, 5000, 64);
  const TrainResult result = train_detector(train, val, cfg, tc, 11);
  CHECK(result.final_map > 0.3);
  CHECK(result.history.size() >= 1);
}
