#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "dacount/params.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

// U-Net density estimator. Level l works at base_channels * 2^l channels;
// the bottleneck sits below the deepest level.
struct EstimatorConfig {
  std::size_t in_channels = 3;
  std::size_t depth = 4;
  std::size_t base_channels = 16;

  void validate() const;
  std::size_t divisor() const { return std::size_t{1} << depth; }
  // Throws ConfigError unless height and width are multiples of 2^depth.
  void check_input_size(std::size_t height, std::size_t width) const;
};

// Fully-convolutional domain classifier over density maps.
struct DiscriminatorConfig {
  static constexpr std::array<std::size_t, 5> channels{64, 128, 256, 512, 1};
  static constexpr std::size_t kernel = 4;
  static constexpr std::size_t stride = 2;
  static constexpr std::size_t padding = 1;
  static constexpr double leaky_slope = 0.2;
  static constexpr std::size_t downsample = 32;

  std::size_t in_channels = 1;

  void check_input_size(std::size_t height, std::size_t width) const;
};

constexpr std::size_t discriminator_parameter_count(std::size_t in_channels = 1) {
  std::size_t n = 0, prev = in_channels;
  for (std::size_t c : DiscriminatorConfig::channels) {
    n += c * prev * DiscriminatorConfig::kernel * DiscriminatorConfig::kernel + c;
    prev = c;
  }
  return n;
}

// Weights uniform in +-sqrt(6 / fan_in), biases zero. Deterministic in seed.
template <typename T>
ModelParams<T> init_estimator(const EstimatorConfig& cfg, std::uint64_t seed);
template <typename T>
ModelParams<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

// [C,H,W] -> [H,W] or [N,C,H,W] -> [N,H,W]; entries are >= 0.
template <typename T>
Tensor<T> estimator_forward(Tape<T>& tape, const EstimatorConfig& cfg, const ModelParams<T>& params,
                            const Tensor<T>& image);

// [1,H,W] -> [1,H/32,W/32] or [N,1,H,W] -> [N,1,H/32,W/32] of P(source).
template <typename T>
Tensor<T> discriminator_forward(Tape<T>& tape, const ModelParams<T>& params, const Tensor<T>& density);

// Differentiable count readout: the sum of all density values.
template <typename T>
Tensor<T> predict_count(Tape<T>& tape, const Tensor<T>& density);
double predict_count(const Tensor<float>& density);

// Recovers the architecture from parameter names and shapes; throws
// CheckpointError if the set does not describe an estimator exactly.
EstimatorConfig infer_estimator_config(const ModelParams<float>& params);

// Throws CheckpointError unless names and shapes match `expected` exactly.
void check_same_structure(const ModelParams<float>& expected, const ModelParams<float>& actual,
                          const std::string& what);

}  // namespace dacount
