#include "fla/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "fla/core/image_io.hpp"
#include "fla/core/parallel.hpp"
#include "fla/detector/decode.hpp"
#include "fla/metrics/jpeg.hpp"

namespace fla {
namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string indexed_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05zu%s", i, ext);
  return buf;
}

}  // namespace

std::optional<AttackMethod> parse_attack_method(const std::string& name) {
  if (name == "fla") return AttackMethod::fla;
  if (name == "fgsm") return AttackMethod::fgsm;
  if (name == "pgd") return AttackMethod::pgd;
  return std::nullopt;
}

const char* attack_method_name(AttackMethod method) {
  switch (method) {
    case AttackMethod::fla: return "fla";
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::pgd: return "pgd";
  }
  return "unknown";
}

AttackRunSummary run_attack_experiment(const KeypointNet<float>& net,
                                       const Dataset& dataset, AttackMethod method,
                                       const ExperimentConfig& config) {
  AttackRunSummary summary;
  summary.outcomes.resize(dataset.samples.size());

  parallel_for(dataset.samples.size(), config.threads, [&](std::size_t i) {
    const Image<float>& clean = dataset.samples[i].image;
    ImageAttackOutcome& o = summary.outcomes[i];

    const auto start = std::chrono::steady_clock::now();
    switch (method) {
      case AttackMethod::fla: {
        auto result = run_fla(net, clean, config.attack);
        o.perturbation = std::move(result.perturbation);
        o.adversarial = std::move(result.adversarial);
        o.trace = std::move(result.trace);
        break;
      }
      case AttackMethod::fgsm: {
        o.perturbation = fgsm(net, clean, config.baseline);
        o.adversarial = clean;
        o.adversarial.data += o.perturbation.data.data;
        break;
      }
      case AttackMethod::pgd: {
        o.perturbation = run_pgd(net, clean, config.baseline);
        o.adversarial = clean;
        o.adversarial.data += o.perturbation.data.data;
        break;
      }
    }
    o.seconds = elapsed_seconds(start);

    o.clean_detections = detect(net, clean);
    o.adv_detections = detect(net, o.adversarial);
    o.adv_jpeg_detections =
        detect(net, jpeg_roundtrip(o.adversarial, config.jpeg_quality));
  });

  std::vector<ImageEval> clean_evals(dataset.samples.size());
  std::vector<ImageEval> adv_evals(dataset.samples.size());
  std::vector<ImageEval> jpeg_evals(dataset.samples.size());
  double p_l2 = 0, p_l0 = 0, time_s = 0, iterations = 0;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const ImageAttackOutcome& o = summary.outcomes[i];
    clean_evals[i] = {o.clean_detections.detections, dataset.samples[i].ground_truth};
    adv_evals[i] = {o.adv_detections.detections, dataset.samples[i].ground_truth};
    jpeg_evals[i] = {o.adv_jpeg_detections.detections, dataset.samples[i].ground_truth};
    p_l2 += perceptibility_l2(o.perturbation.data);
    p_l0 += perceptibility_l0(o.perturbation.data);
    time_s += o.seconds;
    iterations += o.perturbation.iterations_used;
  }
  const double n = std::max<std::size_t>(1, dataset.samples.size());
  const int num_classes = net.config().num_classes;

  MetricsReport& r = summary.report;
  r.map_clean = mean_average_precision(clean_evals, num_classes, config.iou_threshold);
  r.map_attack = mean_average_precision(adv_evals, num_classes, config.iou_threshold);
  r.asr = attack_success_ratio(r.map_clean, r.map_attack);
  r.map_attack_jpeg = mean_average_precision(jpeg_evals, num_classes, config.iou_threshold);
  r.asr_jpeg = attack_success_ratio(r.map_clean, *r.map_attack_jpeg);
  r.p_l2 = p_l2 / n;
  r.p_l0 = p_l0 / n;
  r.mean_attack_time_s = time_s / n;
  r.mean_iterations = iterations / n;
  return summary;
}

MetricsReport transfer_evaluation(const KeypointNet<float>& target_net,
                                  const Dataset& clean_dataset,
                                  const std::vector<Image<float>>& adversarial_images,
                                  double asr_origin, int threads) {
  require(adversarial_images.size() == clean_dataset.samples.size(),
          "transfer_evaluation: adversarial image count does not match dataset");

  std::vector<ImageEval> clean_evals(clean_dataset.samples.size());
  std::vector<ImageEval> adv_evals(clean_dataset.samples.size());
  parallel_for(clean_dataset.samples.size(), threads, [&](std::size_t i) {
    clean_evals[i] = {detect(target_net, clean_dataset.samples[i].image).detections,
                      clean_dataset.samples[i].ground_truth};
    adv_evals[i] = {detect(target_net, adversarial_images[i]).detections,
                    clean_dataset.samples[i].ground_truth};
  });

  const int num_classes = target_net.config().num_classes;
  MetricsReport r;
  r.map_clean = mean_average_precision(clean_evals, num_classes);
  r.map_attack = mean_average_precision(adv_evals, num_classes);
  r.asr = attack_success_ratio(r.map_clean, r.map_attack);
  r.atr = attack_transfer_ratio(r.asr, asr_origin);
  return r;
}

std::vector<SweepRow> radius_sweep(const KeypointNet<float>& net,
                                   const Dataset& dataset,
                                   const std::vector<int>& radii,
                                   const ExperimentConfig& base_config) {
  require(!radii.empty(), "radius_sweep: radii list is empty");
  for (int r : radii) require(r >= 0, "radius_sweep: radii must be non-negative");

  std::vector<SweepRow> rows;
  for (int radius : radii) {
    ExperimentConfig config = base_config;
    config.attack.attack_radius = radius;
    const AttackRunSummary summary =
        run_attack_experiment(net, dataset, AttackMethod::fla, config);
    SweepRow row;
    row.radius = radius;
    row.asr = summary.report.asr;
    row.p_l0 = summary.report.p_l0;
    row.p_l2 = summary.report.p_l2;
    row.mean_time_s = summary.report.mean_attack_time_s;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "r_star,asr,p_l0,p_l2,mean_time_s\n";
  for (const SweepRow& row : rows) {
    out << row.radius << "," << row.asr << "," << row.p_l0 << "," << row.p_l2
        << "," << row.mean_time_s << "\n";
  }
}

void save_attack_outputs(const std::filesystem::path& out_dir,
                         const AttackRunSummary& summary,
                         const ExperimentConfig& config, int num_classes) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "adv");
  fs::create_directories(out_dir / "adv_jpeg");
  fs::create_directories(out_dir / "perturbation");
  fs::create_directories(out_dir / "traces");

  for (std::size_t i = 0; i < summary.outcomes.size(); ++i) {
    const ImageAttackOutcome& o = summary.outcomes[i];
    write_ppm(out_dir / "adv" / indexed_name(i, ".ppm"), quantize_u8(o.adversarial));
    const auto jpeg_bytes = jpeg_encode(quantize_u8(o.adversarial), config.jpeg_quality);
    std::ofstream jf(out_dir / "adv_jpeg" / indexed_name(i, ".jpg"), std::ios::binary);
    jf.write(reinterpret_cast<const char*>(jpeg_bytes.data()),
             static_cast<std::streamsize>(jpeg_bytes.size()));
    write_ppm(out_dir / "perturbation" / indexed_name(i, ".ppm"),
              quantize_signed_u8(o.perturbation.data));
    std::ofstream tf(out_dir / "traces" / indexed_name(i, ".csv"));
    o.trace.write_csv(tf, num_classes);
  }
  std::ofstream rf(out_dir / "report.json");
  rf << summary.report.to_json() << "\n";
}

std::vector<Image<float>> load_adversarial_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) {
    throw std::runtime_error("load_adversarial_images: missing directory " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jpg") files.push_back(entry.path());
  }
  if (files.empty()) {
    throw std::runtime_error("load_adversarial_images: no .jpg files in " + dir.string());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image<float>> images;
  images.reserve(files.size());
  for (const fs::path& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    images.push_back(dequantize_u8<float>(jpeg_decode(bytes)));
  }
  return images;
}

}  // namespace fla
