#include "mmfx/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mmfx {

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += c;
  }
  return tok;
}

uint8_t quantize(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path);
  if (next_token(in) != "P5") throw InputError(path + ": not a binary PGM (P5) file");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0 || maxval != 255) throw InputError(path + ": unsupported PGM geometry or maxval");
  // next_token consumed the single whitespace after maxval.
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw InputError(path + ": truncated PGM payload");
  Tensor img = Tensor::zeros({1, h, w});
  for (size_t i = 0; i < buf.size(); ++i) img[static_cast<int>(i)] = buf[i] / 255.0;
  return img;
}

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw ShapeError("write_pgm: expected [1 x h x w], got " + image.shape_str());
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(image[static_cast<int>(i)]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("write_ppm: expected [3 x h x w], got " + rgb.shape_str());
  const int h = rgb.dim(1), w = rgb.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
  for (int i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c) buf[static_cast<size_t>(i) * 3 + c] = quantize(rgb[c * h * w + i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Tensor overlay_heatmap(const Tensor& image, const Tensor& map_hw) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw ShapeError("overlay_heatmap: image must be [1 x h x w], got " + image.shape_str());
  const int h = image.dim(1), w = image.dim(2);
  if (map_hw.rank() != 2 || map_hw.rows() != h || map_hw.cols() != w)
    throw ShapeError("overlay_heatmap: map " + map_hw.shape_str() + " does not match image " + image.shape_str());
  Tensor rgb = Tensor::zeros({3, h, w});
  for (int i = 0; i < h * w; ++i) {
    const double g = std::clamp(image[i], 0.0, 1.0);
    const double a = 0.6 * std::clamp(map_hw[i], 0.0, 1.0);
    rgb[0 * h * w + i] = (1.0 - a) * g + a;
    rgb[1 * h * w + i] = (1.0 - a) * g;
    rgb[2 * h * w + i] = (1.0 - a) * g;
  }
  return rgb;
}

}  // namespace mmfx
