#include "dacount/batch.hpp"

#include <algorithm>

#include "dacount/errors.hpp"
#include "dacount/rng.hpp"

namespace dacount {

struct BatchStream::EpochIterator::State {
  std::vector<AnnotatedImage> source;
  std::vector<AnnotatedImage> target;
  std::vector<Tensor<float>> density;
  std::size_t batch_size = 1;
};

namespace {

Tensor<float> stack(const std::vector<const Tensor<float>*>& items) {
  Shape shape = items.front()->shape();
  shape.insert(shape.begin(), items.size());
  Tensor<float> out(shape);
  auto d = out.mutable_data();
  const std::size_t stride = items.front()->numel();
  for (std::size_t i = 0; i < items.size(); ++i) std::copy_n(items[i]->data().data(), stride, d.data() + i * stride);
  return out;
}

}  // namespace

BatchStream::BatchStream(std::vector<AnnotatedImage> source, std::vector<AnnotatedImage> target,
                         std::size_t batch_size, const DensityKernelSpec& spec) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (source.empty()) throw ConfigError("source training set is empty");
  if (target.empty()) throw ConfigError("target training set is empty");
  check_consistent_shapes(source);
  check_consistent_shapes(target);
  if (source.front().image.shape() != target.front().image.shape()) {
    throw DataError("source and target image shapes differ: " + shape_str(source.front().image.shape()) + " vs " +
                    shape_str(target.front().image.shape()));
  }
  auto state = std::make_shared<EpochIterator::State>();
  const std::size_t h = source.front().image.dim(1), w = source.front().image.dim(2);
  for (const auto& im : source) state->density.push_back(generate_density_map(im.boxes, h, w, spec).grid);
  state->source = std::move(source);
  state->target = std::move(target);
  state->batch_size = batch_size;
  data_ = std::move(state);
}

std::size_t BatchStream::steps_per_epoch() const {
  return (data_->source.size() + data_->batch_size - 1) / data_->batch_size;
}

std::size_t BatchStream::batch_size() const { return data_->batch_size; }

BatchStream::EpochIterator BatchStream::epoch(std::uint64_t seed, std::size_t epoch) const {
  return EpochIterator(data_, seed, epoch);
}

BatchStream::EpochIterator::EpochIterator(std::shared_ptr<const State> data, std::uint64_t seed, std::size_t epoch)
    : data_(std::move(data)), target_seed_(derive_seed(seed, "target", epoch)) {
  Rng rng(derive_seed(seed, "shuffle", epoch));
  source_order_ = rng.permutation(data_->source.size());
}

std::optional<Batch> BatchStream::EpochIterator::next() {
  if (source_pos_ >= source_order_.size()) return std::nullopt;
  const std::size_t b = std::min(data_->batch_size, source_order_.size() - source_pos_);
  Batch batch;
  std::vector<const Tensor<float>*> imgs, maps, tgts;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t idx = source_order_[source_pos_++];
    batch.source_indices.push_back(idx);
    imgs.push_back(&data_->source[idx].image);
    maps.push_back(&data_->density[idx]);
    batch.source_counts.push_back(static_cast<double>(data_->source[idx].count()));
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (target_pos_ >= target_order_.size()) {
      Rng rng(derive_seed(target_seed_, "cycle", target_cycle_++));
      target_order_ = rng.permutation(data_->target.size());
      target_pos_ = 0;
    }
    const std::size_t idx = target_order_[target_pos_++];
    batch.target_indices.push_back(idx);
    tgts.push_back(&data_->target[idx].image);
  }
  batch.source_images = stack(imgs);
  batch.source_density = stack(maps);
  batch.target_images = stack(tgts);
  return batch;
}

}  // namespace dacount
