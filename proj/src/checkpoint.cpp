#include "fla/detector/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fla {
namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'D', 'E', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t fnv1a(const std::vector<char>& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char b : bytes) {
    hash ^= static_cast<unsigned char>(b);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

struct Writer {
  std::vector<char> bytes;
  template <typename T>
  void put(const T& value) {
    const char* p = reinterpret_cast<const char*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
};

struct Reader {
  const std::vector<char>& bytes;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    T value;
    if (pos + sizeof(T) > bytes.size()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }
  void get_raw(void* out, std::size_t n) {
    if (pos + n > bytes.size()) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(out, bytes.data() + pos, n);
    pos += n;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const KeypointNet<float>& net) {
  const DetectorConfig& cfg = net.config();
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put(kFormatVersion);
  w.put(static_cast<std::int32_t>(cfg.input_size));
  w.put(static_cast<std::int32_t>(cfg.downsample));
  w.put(static_cast<std::int32_t>(cfg.num_classes));
  w.put(static_cast<std::uint8_t>(cfg.global_context ? 1 : 0));
  w.put(cfg.peak_threshold);
  w.put(static_cast<std::int32_t>(cfg.max_detections));
  w.put(static_cast<std::uint32_t>(cfg.stage_channels.size()));
  for (int c : cfg.stage_channels) w.put(static_cast<std::int32_t>(c));

  const auto blocks = net.parameter_blocks();
  w.put(static_cast<std::uint32_t>(blocks.size()));
  for (const MatrixX<float>* block : blocks) {
    w.put(static_cast<std::uint32_t>(block->rows()));
    w.put(static_cast<std::uint32_t>(block->cols()));
    w.put_raw(block->data(), sizeof(float) * static_cast<std::size_t>(block->size()));
  }
  w.put(fnv1a(w.bytes));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw std::runtime_error("save_checkpoint: short write to " + path.string());
}

KeypointNet<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t)) {
    throw std::runtime_error("load_checkpoint: file too small: " + path.string());
  }

  std::vector<char> body(bytes.begin(), bytes.end() - sizeof(std::uint64_t));
  std::uint64_t stored_hash;
  std::memcpy(&stored_hash, bytes.data() + bytes.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  if (fnv1a(body) != stored_hash) {
    throw std::runtime_error("load_checkpoint: checksum mismatch in " + path.string());
  }

  Reader r{body};
  char magic[8];
  r.get_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  }
  if (r.get<std::uint32_t>() != kFormatVersion) {
    throw std::runtime_error("load_checkpoint: unsupported format version");
  }

  DetectorConfig cfg;
  cfg.input_size = r.get<std::int32_t>();
  cfg.downsample = r.get<std::int32_t>();
  cfg.num_classes = r.get<std::int32_t>();
  cfg.global_context = r.get<std::uint8_t>() != 0;
  cfg.peak_threshold = r.get<double>();
  cfg.max_detections = r.get<std::int32_t>();
  cfg.stage_channels.resize(r.get<std::uint32_t>());
  for (int& c : cfg.stage_channels) c = r.get<std::int32_t>();
  cfg.validate();

  KeypointNet<float> net(cfg);
  auto blocks = net.parameter_blocks();
  const std::uint32_t n_blocks = r.get<std::uint32_t>();
  if (n_blocks != blocks.size()) {
    throw std::runtime_error("load_checkpoint: parameter block count mismatch");
  }
  for (MatrixX<float>* block : blocks) {
    const std::uint32_t rows = r.get<std::uint32_t>();
    const std::uint32_t cols = r.get<std::uint32_t>();
    if (rows != block->rows() || cols != block->cols()) {
      throw std::runtime_error("load_checkpoint: block shape incompatible with config");
    }
    r.get_raw(block->data(), sizeof(float) * static_cast<std::size_t>(block->size()));
  }
  return net;
}

}  // namespace fla
