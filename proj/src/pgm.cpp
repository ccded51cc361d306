#include "sononet/pgm.hpp"

#include <cmath>
#include <fstream>

namespace sononet {

std::vector<uint8_t> quantize_u8(const Tensor& image) {
  std::vector<uint8_t> bytes(image.numel());
  for (size_t i = 0; i < image.numel(); ++i) {
    float v = image[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    bytes[i] = uint8_t(std::lround(v * 255.f));
  }
  return bytes;
}

Tensor dequantize_u8(const std::vector<uint8_t>& bytes, int height, int width) {
  Tensor t({1, height, width});
  for (size_t i = 0; i < bytes.size(); ++i) t[i] = float(bytes[i]) * (1.f / 255.f);
  return t;
}

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 1)
    throw invalid_argument_error("write_pgm: need a [1,H,W] image, got " + image.shape_str());
  const int h = image.extent(1), w = image.extent(2);
  const auto bytes = quantize_u8(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw data_error("failed while writing: " + path);
}

static int read_pnm_int(std::ifstream& f, const std::string& path) {
  int c = f.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = f.get();
    c = f.get();
  }
  int v = 0;
  bool any = false;
  while (std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = f.get();
  }
  if (!any) throw data_error("malformed PGM header: " + path);
  return v;
}

Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open image: " + path);
  char p = 0, five = 0;
  f.get(p);
  f.get(five);
  if (p != 'P' || five != '5') throw data_error("not a binary PGM (P5): " + path);
  const int w = read_pnm_int(f, path);
  const int h = read_pnm_int(f, path);
  const int maxval = read_pnm_int(f, path);
  if (maxval != 255) throw data_error("unsupported PGM maxval " + std::to_string(maxval) +
                                      " (need 255): " + path);
  std::vector<uint8_t> bytes(size_t(h) * w);
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw data_error("truncated PGM: " + path);
  return dequantize_u8(bytes, h, w);
}

}  // namespace sononet
