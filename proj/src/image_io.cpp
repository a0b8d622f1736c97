#include "fla/core/image_io.hpp"

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fla {

void write_ppm(const std::filesystem::path& path, const PlaneStackU8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Index col = image.index(x, y);
      row[static_cast<std::size_t>(x) * 3 + 0] = image.data(0, col);
      row[static_cast<std::size_t>(x) * 3 + 1] = image.data(1, col);
      row[static_cast<std::size_t>(x) * 3 + 2] = image.data(2, col);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: short write to " + path.string());
}

PlaneStackU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P6" || width <= 0 || height <= 0 || maxval != 255) {
    throw std::runtime_error("read_ppm: unsupported header in " + path.string());
  }
  in.get();  // single whitespace byte after the header
  PlaneStackU8 image;
  image.width = width;
  image.height = height;
  image.data.resize(3, static_cast<Eigen::Index>(width) * height);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated data in " + path.string());
    for (int x = 0; x < width; ++x) {
      const Eigen::Index col = image.index(x, y);
      image.data(0, col) = row[static_cast<std::size_t>(x) * 3 + 0];
      image.data(1, col) = row[static_cast<std::size_t>(x) * 3 + 1];
      image.data(2, col) = row[static_cast<std::size_t>(x) * 3 + 2];
    }
  }
  return image;
}

}  // namespace fla
