#include "dacount/losses.hpp"

#include "dacount/errors.hpp"
#include "dacount/ops.hpp"

namespace dacount {

namespace {

template <typename T>
std::size_t samples_of(const Tensor<T>& disc_out) {
  if (disc_out.rank() == 3) return 1;
  if (disc_out.rank() == 4) return disc_out.dim(0);
  throw DimensionError("discriminator output must be [1,h,w] or [N,1,h,w], got " + shape_str(disc_out.shape()));
}

// -(1/N) * sum(log_terms), or with per-sample pixel averaging.
template <typename T>
Tensor<T> reduce_negative_log(Tape<T>& tape, const Tensor<T>& log_terms, std::size_t samples, PixelReduction r) {
  const std::size_t pixels = log_terms.numel() / samples;
  const double denom = static_cast<double>(samples) * (r == PixelReduction::mean ? static_cast<double>(pixels) : 1.0);
  return ops::scale(tape, ops::sum(tape, log_terms), static_cast<T>(-1.0 / denom));
}

}  // namespace

template <typename T>
DensityLossTerms<T> density_loss_terms(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("density_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  if (pred.rank() != 2 && pred.rank() != 3) {
    throw DimensionError("density_loss expects [H,W] or [N,H,W], got " + shape_str(pred.shape()));
  }
  DensityLossTerms<T> out;
  out.density_map = ops::mse_loss(tape, pred, gt);
  const bool single = pred.rank() == 2;
  const Tensor<T> p = single ? ops::reshape(tape, pred, Shape{1, pred.dim(0), pred.dim(1)}) : pred;
  const Tensor<T> g = single ? ops::reshape(tape, gt, Shape{1, gt.dim(0), gt.dim(1)}) : gt;
  const Tensor<T> diff = ops::sub(tape, ops::sum_per_sample(tape, p), ops::sum_per_sample(tape, g));
  out.regression = ops::mean(tape, ops::square(tape, diff));
  out.total = ops::add(tape, out.density_map, out.regression);
  return out;
}

template <typename T>
Tensor<T> adversarial_loss(Tape<T>& tape, const Tensor<T>& disc_out, PixelReduction reduction) {
  const std::size_t n = samples_of(disc_out);
  return reduce_negative_log(tape, ops::log_clamped(tape, disc_out, static_cast<T>(kLogClamp)), n, reduction);
}

template <typename T>
Tensor<T> discriminator_loss(Tape<T>& tape, const Tensor<T>& disc_out, Domain label, PixelReduction reduction) {
  const std::size_t n = samples_of(disc_out);
  // Source pixels score log(p), target pixels log(1 - p).
  const Tensor<T> prob = label == Domain::source ? disc_out : ops::affine(tape, disc_out, T(-1), T(1));
  return reduce_negative_log(tape, ops::log_clamped(tape, prob, static_cast<T>(kLogClamp)), n, reduction);
}

#define DACOUNT_INSTANTIATE_LOSSES(T)                                                                     \
  template DensityLossTerms<T> density_loss_terms(Tape<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> adversarial_loss(Tape<T>&, const Tensor<T>&, PixelReduction);                        \
  template Tensor<T> discriminator_loss(Tape<T>&, const Tensor<T>&, Domain, PixelReduction);

DACOUNT_INSTANTIATE_LOSSES(float)
DACOUNT_INSTANTIATE_LOSSES(double)

#undef DACOUNT_INSTANTIATE_LOSSES

}  // namespace dacount
