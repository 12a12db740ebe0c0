#include "dacount/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "dacount/errors.hpp"

namespace dacount {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = is.get();
  }
  return tok;
}

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image '" + path.string() + "'");
  const std::string magic = header_token(is);
  if (magic != "P6") throw DataError("'" + path.string() + "' is not a binary PPM (P6) file");
  std::size_t w = 0, h = 0;
  int maxval = 0;
  try {
    w = std::stoul(header_token(is));
    h = std::stoul(header_token(is));
    maxval = std::stoi(header_token(is));
  } catch (const std::exception&) {
    throw DataError("'" + path.string() + "' has a malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) {
    throw DataError("'" + path.string() + "': only non-empty P6 images with maxval 255 are supported");
  }
  std::vector<unsigned char> px(w * h * 3);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (is.gcount() != static_cast<std::streamsize>(px.size())) {
    throw DataError("'" + path.string() + "' is truncated");
  }
  Tensor<float> img(Shape{3, h, w});
  auto d = img.mutable_data();
  const std::size_t plane = w * h;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) d[c * plane + i] = static_cast<float>(px[3 * i + c]) / 255.0f;
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected [3,H,W] image, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::vector<unsigned char> px(plane * 3);
  auto d = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(d[c * plane + i], 0.0f, 1.0f);
      px[3 * i + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace dacount
