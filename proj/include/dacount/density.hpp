#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "dacount/tensor.hpp"

namespace dacount {

// Axis-aligned box in pixel coordinates: center (cx, cy), extent (w, h).
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

struct DensityKernelSpec {
  // sigma = sigma_ratio * max(w, h)
  double sigma_ratio = 0.25;
  // Kernel support radius in units of sigma.
  double truncation_radius = 4.0;

  void validate() const;
  double sigma_for(const BoundingBox& box) const;
};

// Non-negative [H, W] grid whose total mass equals the object count.
struct DensityMap {
  Tensor<float> grid;

  double count() const;
  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
};

// One isotropic Gaussian per box (mean at the box center), sampled at pixel
// centers, truncated to the image and renormalized to unit in-image mass.
DensityMap generate_density_map(const std::vector<BoundingBox>& boxes, std::size_t height, std::size_t width,
                                const DensityKernelSpec& spec = {});

// "DMAP 1 <H> <W>\n" followed by H*W little-endian float32, row-major.
void write_dmap(const std::filesystem::path& path, const Tensor<float>& grid);
Tensor<float> read_dmap(const std::filesystem::path& path);

}  // namespace dacount
