#pragma once

#include "dacount/dataset.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

// Per-sample reduction over discriminator output pixels; batches are always
// averaged over samples.
enum class PixelReduction { sum, mean };

// Probabilities are clamped to at least this value before taking logs.
inline constexpr double kLogClamp = 1e-7;

template <typename T>
struct DensityLossTerms {
  Tensor<T> density_map;  // mean squared error over all pixels
  Tensor<T> regression;   // mean over the batch of (sum(pred) - sum(gt))^2
  Tensor<T> total;
};

// pred and gt are [H,W] or [N,H,W].
template <typename T>
DensityLossTerms<T> density_loss_terms(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& gt);

template <typename T>
Tensor<T> density_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& gt) {
  return density_loss_terms(tape, pred, gt).total;
}

// -sum log(p) over discriminator pixels of target-domain maps; small when
// the discriminator takes target predictions for source ones.
// disc_out is [1,h,w] or [N,1,h,w].
template <typename T>
Tensor<T> adversarial_loss(Tape<T>& tape, const Tensor<T>& disc_out, PixelReduction reduction = PixelReduction::sum);

// Binary cross-entropy with label y = 1 for source and y = 0 for target;
// every pixel of a sample carries the sample's label.
template <typename T>
Tensor<T> discriminator_loss(Tape<T>& tape, const Tensor<T>& disc_out, Domain label,
                             PixelReduction reduction = PixelReduction::sum);

}  // namespace dacount
