#pragma once

// Dense row-major tensors and a reverse-mode tape.
//
// A Tensor is a cheap handle onto shared storage. Operations in ops.hpp take
// a Tape and record a backward rule whenever at least one input requires a
// gradient; backward(loss) replays the tape once in reverse construction
// order and accumulates (+=) into every reachable tensor that requires grad.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dacount {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct TapeState;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  // Set only for outputs of recorded operations.
  std::weak_ptr<TapeState<T>> tape;

  // Zero-initialized on first use. Never called for requires_grad == false.
  std::span<T> grad_buffer();
  void accumulate_grad(std::span<const T> g);
};

template <typename T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::shared_ptr<TensorImpl<T>> output;
  std::function<void(Node&)> backward;
};

template <typename T>
struct TapeState {
  std::vector<Node<T>> nodes;
  bool consumed = false;
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  // Only valid on leaves (tensors not produced by a recorded operation).
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  // Allocates a zeroed buffer if needed. Requires requires_grad().
  std::span<T> mutable_grad();
  void clear_grad();

  // Shares storage, drops the graph link and never requires grad.
  Tensor detach() const;
  // Deep copy of the values as a fresh leaf.
  Tensor clone() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape());
    auto src = data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  static Tensor from_impl(std::shared_ptr<Impl> impl);

 private:
  void check_defined() const;
  std::shared_ptr<Impl> impl_;
};

template <typename T>
class Tape {
 public:
  using Node = detail::Node<T>;
  using BackwardFn = std::function<void(Node&)>;

  Tape();

  std::size_t size() const;
  bool consumed() const;

  // True when any of the inputs participates in gradient computation.
  static bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs);

  // Records `output` as produced by `inputs`. The backward rule reads
  // node.output->grad and accumulates into inputs that require grad.
  void record(Tensor<T>& output, std::initializer_list<const Tensor<T>*> inputs, BackwardFn backward);

 private:
  std::shared_ptr<detail::TapeState<T>> state_;
};

// Seeds d(loss)/d(loss) = 1 and replays the loss's tape in reverse.
// Throws UsageError for non-scalar losses, detached losses or a tape that
// has already been consumed.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dacount
