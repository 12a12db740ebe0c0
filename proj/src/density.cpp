#include "dacount/density.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "dacount/errors.hpp"

namespace dacount {

void DensityKernelSpec::validate() const {
  if (!(sigma_ratio > 0.0)) throw ConfigError("sigma_ratio must be > 0");
  if (!(truncation_radius >= 3.0)) throw ConfigError("truncation_radius must be >= 3 (in sigma units)");
}

double DensityKernelSpec::sigma_for(const BoundingBox& box) const { return sigma_ratio * std::max(box.w, box.h); }

double DensityMap::count() const {
  double s = 0.0;
  for (float v : grid.data()) s += v;
  return s;
}

DensityMap generate_density_map(const std::vector<BoundingBox>& boxes, std::size_t height, std::size_t width,
                                const DensityKernelSpec& spec) {
  if (height < 1 || width < 1) throw DimensionError("density map needs height, width >= 1");
  spec.validate();
  std::vector<double> acc(height * width, 0.0);
  std::vector<double> kernel;
  for (const auto& box : boxes) {
    if (!(box.w > 0.0) || !(box.h > 0.0)) throw DataError("bounding box extents must be positive");
    const double sigma = spec.sigma_for(box);
    const double radius = spec.truncation_radius * sigma;
    const auto clamp_px = [](double v, std::size_t n) {
      return static_cast<std::ptrdiff_t>(std::clamp(v, 0.0, static_cast<double>(n)));
    };
    // Pixel (x, y) has its center at (x + 0.5, y + 0.5).
    const std::ptrdiff_t x0 = clamp_px(std::floor(box.cx - radius - 0.5), width);
    const std::ptrdiff_t x1 = clamp_px(std::ceil(box.cx + radius - 0.5) + 1, width);
    const std::ptrdiff_t y0 = clamp_px(std::floor(box.cy - radius - 0.5), height);
    const std::ptrdiff_t y1 = clamp_px(std::ceil(box.cy + radius - 0.5) + 1, height);

    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double mass = 0.0;
    kernel.assign(static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (x1 - x0) * (y1 - y0))), 0.0);
    std::size_t k = 0;
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
      const double dy = static_cast<double>(y) + 0.5 - box.cy;
      for (std::ptrdiff_t x = x0; x < x1; ++x, ++k) {
        const double dx = static_cast<double>(x) + 0.5 - box.cx;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= radius * radius) {
          kernel[k] = std::exp(-d2 * inv2s2);
          mass += kernel[k];
        }
      }
    }
    if (mass > 0.0) {
      k = 0;
      for (std::ptrdiff_t y = y0; y < y1; ++y) {
        for (std::ptrdiff_t x = x0; x < x1; ++x, ++k) {
          acc[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] += kernel[k] / mass;
        }
      }
    } else {
      // Support entirely outside the frame: the object still counts once, at
      // the nearest in-image pixel.
      const auto px = static_cast<std::size_t>(std::clamp(std::floor(box.cx), 0.0, static_cast<double>(width - 1)));
      const auto py = static_cast<std::size_t>(std::clamp(std::floor(box.cy), 0.0, static_cast<double>(height - 1)));
      acc[py * width + px] += 1.0;
    }
  }
  Tensor<float> grid(Shape{height, width});
  auto g = grid.mutable_data();
  for (std::size_t i = 0; i < acc.size(); ++i) g[i] = static_cast<float>(acc[i]);
  return DensityMap{std::move(grid)};
}

void write_dmap(const std::filesystem::path& path, const Tensor<float>& grid) {
  if (grid.rank() != 2) throw DimensionError("write_dmap: expected [H,W] grid, got " + shape_str(grid.shape()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "DMAP 1 " << grid.dim(0) << ' ' << grid.dim(1) << '\n';
  std::vector<char> bytes;
  bytes.reserve(grid.numel() * 4);
  for (float v : grid.data()) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xffu));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

Tensor<float> read_dmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open density map '" + path.string() + "'");
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  std::size_t h = 0, w = 0;
  if (!(hs >> magic >> version >> h >> w) || magic != "DMAP" || version != 1 || h == 0 || w == 0) {
    throw DataError("'" + path.string() + "' is not a DMAP v1 file");
  }
  std::vector<unsigned char> bytes(h * w * 4);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataError("'" + path.string() + "' is truncated");
  }
  Tensor<float> grid(Shape{h, w});
  auto g = grid.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    g[i] = std::bit_cast<float>(u);
  }
  return grid;
}

}  // namespace dacount
