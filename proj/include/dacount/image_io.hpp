#pragma once

#include <filesystem>

#include "dacount/tensor.hpp"

namespace dacount {

// Binary PPM (P6, maxval 255) <-> [3, H, W] float image in [0, 1].
Tensor<float> read_ppm(const std::filesystem::path& path);
// Values are clamped to [0, 1] and rounded to the nearest 8-bit level.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

}  // namespace dacount
