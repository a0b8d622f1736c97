// Command-line surface for the toolkit: dataset generation, detector
// training, white-box attacks, black-box transfer evaluation and the attack
// radius sweep. Every command writes a run manifest with the resolved
// configuration and seeds so runs can be reproduced bit-identically.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fla/core/image_io.hpp"
#include "fla/core/rng.hpp"
#include "fla/data/shapes.hpp"
#include "fla/detector/checkpoint.hpp"
#include "fla/detector/train.hpp"
#include "fla/experiment.hpp"
#include "fla/metrics/jpeg.hpp"
#include "fla/metrics/metrics.hpp"

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "1.0.0";

struct KeyValueConfig {
  std::map<std::string, std::string> values;

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path);
    KeyValueConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("config line " + std::to_string(line_no) +
                                 ": expected key=value");
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      cfg.values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = values.find(key);
    if (it == values.end()) return;
    std::istringstream ss(it->second);
    ss >> out;
    if (ss.fail()) throw std::runtime_error("config value for " + key + " is malformed");
    consumed.insert(key);
  }

  void check_all_consumed() const {
    for (const auto& [key, value] : values) {
      if (!consumed.count(key)) throw std::runtime_error("unknown config key: " + key);
    }
  }

  std::set<std::string> consumed;
};

struct ResolvedConfig {
  fla::DetectorConfig detector;
  fla::TrainConfig train;
  fla::ExperimentConfig experiment;
};

ResolvedConfig resolve_config(const std::string& config_path) {
  ResolvedConfig rc;
  if (config_path.empty()) return rc;
  KeyValueConfig kv = KeyValueConfig::load(config_path);
  kv.get("detector.input_size", rc.detector.input_size);
  kv.get("detector.num_classes", rc.detector.num_classes);
  kv.get("detector.peak_threshold", rc.detector.peak_threshold);
  kv.get("detector.max_detections", rc.detector.max_detections);
  int ctx = rc.detector.global_context ? 1 : 0;
  kv.get("detector.global_context", ctx);
  rc.detector.global_context = ctx != 0;
  kv.get("train.epochs", rc.train.epochs);
  kv.get("train.batch_size", rc.train.batch_size);
  kv.get("train.learning_rate", rc.train.learning_rate);
  kv.get("train.map_gate", rc.train.map_gate);
  kv.get("train.early_stop_map", rc.train.early_stop_map);
  kv.get("train.threads", rc.train.threads);
  kv.get("attack.radius", rc.experiment.attack.attack_radius);
  kv.get("attack.budget", rc.experiment.attack.total_budget);
  kv.get("attack.max_iterations", rc.experiment.attack.max_iterations);
  kv.get("attack.neighbor_radius", rc.experiment.attack.neighbor_radius);
  kv.get("attack.refresh_threshold", rc.experiment.attack.refresh_threshold);
  kv.get("baseline.budget", rc.experiment.baseline.budget);
  kv.get("baseline.step_size", rc.experiment.baseline.step_size);
  kv.get("baseline.iterations", rc.experiment.baseline.iterations);
  kv.get("baseline.projection_radius", rc.experiment.baseline.projection_radius);
  kv.get("experiment.jpeg_quality", rc.experiment.jpeg_quality);
  kv.get("experiment.threads", rc.experiment.threads);
  kv.check_all_consumed();
  return rc;
}

json config_snapshot(const ResolvedConfig& rc) {
  json j;
  j["detector"] = {{"input_size", rc.detector.input_size},
                   {"downsample", rc.detector.downsample},
                   {"num_classes", rc.detector.num_classes},
                   {"stage_channels", rc.detector.stage_channels},
                   {"global_context", rc.detector.global_context},
                   {"peak_threshold", rc.detector.peak_threshold},
                   {"max_detections", rc.detector.max_detections}};
  j["train"] = {{"epochs", rc.train.epochs},
                {"batch_size", rc.train.batch_size},
                {"learning_rate", rc.train.learning_rate},
                {"lr_decay", rc.train.lr_decay},
                {"decay_epoch", rc.train.decay_epoch},
                {"size_loss_weight", rc.train.size_loss_weight},
                {"offset_loss_weight", rc.train.offset_loss_weight},
                {"map_gate", rc.train.map_gate},
                {"early_stop_map", rc.train.early_stop_map},
                {"eval_every", rc.train.eval_every}};
  j["attack"] = {{"radius", rc.experiment.attack.attack_radius},
                 {"budget", rc.experiment.attack.total_budget},
                 {"max_iterations", rc.experiment.attack.max_iterations},
                 {"neighbor_radius", rc.experiment.attack.neighbor_radius},
                 {"refresh_threshold", rc.experiment.attack.refresh_threshold},
                 {"peak_threshold", rc.experiment.attack.peak_threshold}};
  j["baseline"] = {{"budget", rc.experiment.baseline.budget},
                   {"step_size", rc.experiment.baseline.step_size},
                   {"iterations", rc.experiment.baseline.iterations},
                   {"projection_radius", rc.experiment.baseline.projection_radius}};
  j["experiment"] = {{"jpeg_quality", rc.experiment.jpeg_quality}};
  return j;
}

void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const json& arguments, const ResolvedConfig& rc,
                    std::uint64_t seed, double wall_seconds,
                    const json& outputs) {
  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = command;
  manifest["arguments"] = arguments;
  manifest["config"] = config_snapshot(rc);
  manifest["seed"] = seed;
  manifest["wall_seconds"] = wall_seconds;
  manifest["outputs"] = outputs;
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  std::cout << "manifest: " << path.string() << "\n";
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

fla::Dataset load_dataset_checked(const std::string& dir) {
  if (!std::filesystem::exists(std::filesystem::path(dir) / "manifest.json")) {
    throw std::runtime_error("dataset not found at " + dir +
                             " (missing manifest.json)");
  }
  return fla::read_dataset(dir);
}

int cmd_make_dataset(const std::string& out_dir, int count, std::uint64_t seed,
                     int image_size) {
  Timer timer;
  fla::write_dataset(out_dir, count, seed, image_size);
  ResolvedConfig rc;
  write_manifest(std::filesystem::path(out_dir) / "run_manifest.json", "make-dataset",
                 {{"out", out_dir}, {"count", count}, {"image_size", image_size}}, rc,
                 seed, timer.seconds(), {{"dataset_dir", out_dir}});
  std::cout << "dataset: " << out_dir << " (" << count << " images)\n";
  return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& out_path,
              const std::string& config_path, std::uint64_t seed,
              double val_fraction) {
  Timer timer;
  ResolvedConfig rc = resolve_config(config_path);
  fla::Dataset full = load_dataset_checked(dataset_dir);
  if (full.samples.empty()) throw std::runtime_error("dataset is empty: " + dataset_dir);
  rc.detector.input_size = full.image_size;

  // deterministic tail split for validation
  const std::size_t val_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(static_cast<double>(full.samples.size()) * val_fraction));
  fla::Dataset train_set, val_set;
  train_set.image_size = val_set.image_size = full.image_size;
  train_set.class_names = val_set.class_names = full.class_names;
  const std::size_t train_count = full.samples.size() - val_count;
  for (std::size_t i = 0; i < full.samples.size(); ++i) {
    (i < train_count ? train_set : val_set).samples.push_back(std::move(full.samples[i]));
  }
  if (train_set.samples.empty()) throw std::runtime_error("dataset too small to split");

  double final_map = 0;
  int exit_code = 0;
  try {
    fla::TrainResult result =
        fla::train_detector(train_set, val_set, rc.detector, rc.train, seed);
    final_map = result.final_map;
    fla::save_checkpoint(out_path, result.net);
    std::cout << "checkpoint: " << out_path << "\n";
  } catch (const fla::TrainingGateFailure& failure) {
    final_map = failure.achieved_map;
    std::cerr << "error: " << failure.what() << "\n";
    exit_code = 1;
  }

  json report;
  report["map_clean"] = final_map;
  report["map_gate"] = rc.train.map_gate;
  report["train_images"] = train_set.samples.size();
  report["val_images"] = val_set.samples.size();
  report["wall_seconds"] = timer.seconds();
  const std::string report_path = out_path + ".report.json";
  std::ofstream rf(report_path);
  rf << report.dump(2) << "\n";
  std::cout << "report: " << report_path << "\n";

  write_manifest(out_path + ".manifest.json", "train",
                 {{"dataset", dataset_dir}, {"out", out_path}, {"config", config_path},
                  {"val_fraction", val_fraction}},
                 rc, seed, timer.seconds(),
                 {{"checkpoint", out_path}, {"report", report_path}});
  return exit_code;
}

int cmd_attack(const std::string& checkpoint_path, const std::string& dataset_dir,
               const std::string& method_name, const std::string& out_dir,
               const std::string& config_path, std::uint64_t seed) {
  const auto method = fla::parse_attack_method(method_name);
  if (!method) {
    throw CLI::ValidationError("--method", "unknown attack name: " + method_name);
  }
  Timer timer;
  ResolvedConfig rc = resolve_config(config_path);
  const fla::KeypointNet<float> net = fla::load_checkpoint(checkpoint_path);
  rc.experiment.attack.peak_threshold = net.config().peak_threshold;
  rc.experiment.baseline.peak_threshold = net.config().peak_threshold;
  fla::Dataset dataset = load_dataset_checked(dataset_dir);

  const fla::AttackRunSummary summary =
      fla::run_attack_experiment(net, dataset, *method, rc.experiment);
  std::filesystem::create_directories(out_dir);
  fla::save_attack_outputs(out_dir, summary, rc.experiment, net.config().num_classes);

  write_manifest(std::filesystem::path(out_dir) / "manifest.json", "attack",
                 {{"checkpoint", checkpoint_path}, {"dataset", dataset_dir},
                  {"method", method_name}, {"out", out_dir}, {"config", config_path}},
                 rc, seed, timer.seconds(),
                 {{"report", (std::filesystem::path(out_dir) / "report.json").string()},
                  {"adv_dir", out_dir}});

  std::cout << "report: " << (std::filesystem::path(out_dir) / "report.json").string()
            << "\n"
            << summary.report.to_json() << "\n";
  return 0;
}

int cmd_transfer(const std::string& adv_dir, const std::string& checkpoint_path,
                 const std::string& out_path) {
  namespace fs = std::filesystem;
  Timer timer;
  const fs::path manifest_path = fs::path(adv_dir) / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("missing origin manifest: " + manifest_path.string());
  }
  json manifest;
  std::ifstream mf(manifest_path);
  mf >> manifest;
  const std::string dataset_dir = manifest.at("arguments").at("dataset").get<std::string>();

  std::ifstream rf(fs::path(adv_dir) / "report.json");
  if (!rf) throw std::runtime_error("missing origin report under " + adv_dir);
  std::stringstream buffer;
  buffer << rf.rdbuf();
  const fla::MetricsReport origin = fla::MetricsReport::from_json(buffer.str());

  const fla::KeypointNet<float> net = fla::load_checkpoint(checkpoint_path);
  fla::Dataset dataset = load_dataset_checked(dataset_dir);
  const auto adv_images = fla::load_adversarial_images(fs::path(adv_dir) / "adv_jpeg");

  const fla::MetricsReport report =
      fla::transfer_evaluation(net, dataset, adv_images, origin.asr);

  const std::string out =
      out_path.empty() ? (fs::path(adv_dir) / "transfer_report.json").string() : out_path;
  std::ofstream of(out);
  of << report.to_json() << "\n";
  std::cout << "report: " << out << "\n" << report.to_json() << "\n";

  ResolvedConfig rc;
  write_manifest(out + ".manifest.json", "transfer",
                 {{"adv", adv_dir}, {"checkpoint", checkpoint_path}}, rc, 0,
                 timer.seconds(), {{"report", out}});
  return 0;
}

int cmd_sweep_radius(const std::string& checkpoint_path, const std::string& dataset_dir,
                     const std::vector<int>& radii, const std::string& out_path,
                     const std::string& config_path, std::uint64_t seed) {
  for (int r : radii) {
    if (r < 0) throw CLI::ValidationError("--radii", "radii must be non-negative");
  }
  Timer timer;
  ResolvedConfig rc = resolve_config(config_path);
  const fla::KeypointNet<float> net = fla::load_checkpoint(checkpoint_path);
  rc.experiment.attack.peak_threshold = net.config().peak_threshold;
  fla::Dataset dataset = load_dataset_checked(dataset_dir);

  const auto rows = fla::radius_sweep(net, dataset, radii, rc.experiment);
  std::ofstream out(out_path);
  fla::write_sweep_csv(out, rows);
  std::cout << "sweep: " << out_path << "\n";

  write_manifest(out_path + ".manifest.json", "sweep-radius",
                 {{"checkpoint", checkpoint_path}, {"dataset", dataset_dir},
                  {"radii", radii}, {"out", out_path}, {"config", config_path}},
                 rc, seed, timer.seconds(), {{"csv", out_path}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized adversarial attacks on an anchor-free keypoint detector"};
  app.require_subcommand(1);

  std::string dataset_dir, out_path, config_path, checkpoint_path, method, adv_dir;
  std::uint64_t seed = 1;
  int count = 100, image_size = 128;
  double val_fraction = 0.2;
  std::vector<int> radii;

  auto* make = app.add_subcommand("make-dataset", "Generate a synthetic shapes dataset");
  make->add_option("--out", out_path, "Output directory")->required();
  make->add_option("--count", count, "Number of images");
  make->add_option("--seed", seed, "Root seed");
  make->add_option("--image-size", image_size, "Square image size in pixels");

  auto* train = app.add_subcommand("train", "Train the toy keypoint detector");
  train->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  train->add_option("--out", out_path, "Checkpoint output path")->required();
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed, "Root seed");
  train->add_option("--val-fraction", val_fraction, "Held-out validation fraction");

  auto* attack = app.add_subcommand("attack", "Attack a dataset with fla, fgsm or pgd");
  attack->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  attack->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  attack->add_option("--method", method, "Attack name: fla | fgsm | pgd")->required();
  attack->add_option("--out", out_path, "Output directory")->required();
  attack->add_option("--config", config_path, "key=value config file");
  attack->add_option("--seed", seed, "Root seed");

  auto* transfer = app.add_subcommand("transfer",
                                      "Evaluate saved adversarial JPEGs on another model");
  transfer->add_option("--adv", adv_dir, "Attack output directory")->required();
  transfer->add_option("--checkpoint", checkpoint_path, "Target model checkpoint")->required();
  transfer->add_option("--out", out_path, "Report output path");

  auto* sweep = app.add_subcommand("sweep-radius", "Attack radius trade-off sweep");
  sweep->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  sweep->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  sweep->add_option("--radii", radii, "Radii to sweep")->required()->delimiter(',');
  sweep->add_option("--out", out_path, "CSV output path")->required();
  sweep->add_option("--config", config_path, "key=value config file");
  sweep->add_option("--seed", seed, "Root seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make->parsed()) return cmd_make_dataset(out_path, count, seed, image_size);
    if (train->parsed()) return cmd_train(dataset_dir, out_path, config_path, seed, val_fraction);
    if (attack->parsed())
      return cmd_attack(checkpoint_path, dataset_dir, method, out_path, config_path, seed);
    if (transfer->parsed()) return cmd_transfer(adv_dir, checkpoint_path, out_path);
    if (sweep->parsed())
      return cmd_sweep_radius(checkpoint_path, dataset_dir, radii, out_path, config_path, seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
