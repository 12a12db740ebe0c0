#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dacount/tensor.hpp"

namespace dacount {

// Named, ordered parameter collection with per-parameter Adam moments.
template <typename T>
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    // Adam first/second moments; empty until the first optimizer step.
    std::vector<T> m;
    std::vector<T> v;
  };

  // Throws UsageError on a duplicate name. The tensor is marked requires_grad.
  void add(std::string name, Tensor<T> value);

  bool contains(const std::string& name) const;
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  // Total number of scalar parameters.
  std::size_t parameter_count() const;

  // Views sharing storage that never require grad. Forward passes through a
  // frozen copy still propagate gradients to their inputs.
  ModelParams frozen() const;
  // Independent deep copy (values and moments).
  ModelParams clone() const;
  void clear_grads();

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  std::int64_t adam_step = 0;

 private:
  std::vector<Entry> entries_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter; gradients are released
// afterwards. Throws UsageError naming the first parameter without a gradient.
template <typename T>
void adam_step(ModelParams<T>& params, const AdamConfig& cfg);

extern template class ModelParams<float>;
extern template class ModelParams<double>;

}  // namespace dacount
