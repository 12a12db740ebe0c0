#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "dacount/dataset.hpp"
#include "dacount/density.hpp"

namespace dacount {

// One training step's worth of data. Target images carry no labels.
struct Batch {
  Tensor<float> source_images;   // [B, C, H, W]
  Tensor<float> source_density;  // [B, H, W] ground-truth maps
  std::vector<double> source_counts;
  Tensor<float> target_images;   // [B', C, H, W]
  std::vector<std::size_t> source_indices;
  std::vector<std::size_t> target_indices;
};

// Source/target pair with ground-truth density maps precomputed once.
class BatchStream {
 public:
  BatchStream(std::vector<AnnotatedImage> source, std::vector<AnnotatedImage> target, std::size_t batch_size,
              const DensityKernelSpec& spec = {});

  std::size_t steps_per_epoch() const;
  std::size_t batch_size() const;

  class EpochIterator {
   public:
    // Next batch, or nullopt once every source image has been used once.
    std::optional<Batch> next();

   private:
    friend class BatchStream;
    struct State;
    EpochIterator(std::shared_ptr<const State> data, std::uint64_t seed, std::size_t epoch);
    std::shared_ptr<const State> data_;
    std::vector<std::size_t> source_order_;
    std::size_t source_pos_ = 0;
    std::uint64_t target_seed_ = 0;
    std::size_t target_cycle_ = 0;
    std::vector<std::size_t> target_order_;
    std::size_t target_pos_ = 0;
  };

  // Source order is a permutation drawn from (seed, epoch); the target list
  // is cycled independently through its own seeded permutations.
  EpochIterator epoch(std::uint64_t seed, std::size_t epoch) const;

 private:
  std::shared_ptr<const EpochIterator::State> data_;
};

}  // namespace dacount
