#pragma once

#include <filesystem>
#include <utility>

#include "dacount/models.hpp"
#include "dacount/params.hpp"

namespace dacount {

// Layout:
//   "CKPT 1 <n_params>" [" adam <step>"] "\n"
//   per parameter: "<name>\n", "<d0> <d1> ...\n", little-endian float32 values
//   when the adam flag is present: per parameter, m values then v values
void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path,
                     bool include_moments = true);

// Throws CheckpointError on bad magic, unsupported version or truncation.
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

// Strict loads: the parameter set must describe the named model exactly.
std::pair<EstimatorConfig, ModelParams<float>> load_estimator(const std::filesystem::path& path);
ModelParams<float> load_discriminator(const std::filesystem::path& path);

}  // namespace dacount
