#pragma once

// Differentiable operations. Spatial ops accept [C,H,W] or a batched
// [N,C,H,W] layout. Every op leaves its inputs' data untouched.

#include <cstddef>

#include "dacount/tensor.hpp"

namespace dacount::ops {

// Zero-padded 2-D cross-correlation. weight is [C_out,C_in,k,k], bias [C_out].
// Output spatial size is floor((H + 2*padding - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

// k x k max pooling, no padding. Backward routes to the first maximum in
// row-major window order.
template <typename T>
Tensor<T> max_pool2d(Tape<T>& tape, const Tensor<T>& input, std::size_t k, std::size_t stride);

template <typename T>
Tensor<T> upsample_nearest2x(Tape<T>& tape, const Tensor<T>& input);

// Channels of a precede channels of b.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// Channels [begin, end) of the input.
template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& input, std::size_t begin, std::size_t end);

// x if x > 0 else slope*x. The derivative at exactly 0 is taken as slope.
template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
  return leaky_relu(tape, input, T(0));
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input);

// Elementwise binary ops on identical shapes.
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// scale*x + shift
template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& input, T scale, T shift);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor) {
  return affine(tape, input, factor, T(0));
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& input);

// log(max(x, floor)); zero gradient where the clamp is active.
template <typename T>
Tensor<T> log_clamped(Tape<T>& tape, const Tensor<T>& input, T floor);

// Full reductions to a [1] tensor.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input);
template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& input);

// [N, ...] -> [N], summing everything but the leading dimension.
template <typename T>
Tensor<T> sum_per_sample(Tape<T>& tape, const Tensor<T>& input);

// Same element count, new shape. Copies data.
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape);

// mean((pred - target)^2)
template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

// Output size of a convolution/pooling window along one axis.
std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

}  // namespace dacount::ops
