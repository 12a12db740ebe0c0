#include "dacount/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "dacount/errors.hpp"

namespace dacount {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
  if (!has_grad) {
    grad.assign(data->size(), T(0));
    has_grad = true;
  }
  return grad;
}

template <typename T>
void TensorImpl<T>::accumulate_grad(std::span<const T> g) {
  if (!requires_grad) return;
  auto buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  impl_->data = std::make_shared<std::vector<T>>(shape_numel(shape), T(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) : Tensor(std::move(shape), requires_grad) {
  if (values.size() != impl_->data->size()) {
    throw DimensionError("tensor of shape " + shape_str(impl_->shape) + " needs " +
                         std::to_string(impl_->data->size()) + " values, got " + std::to_string(values.size()));
  }
  *impl_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.impl_->data->begin(), t.impl_->data->end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{1}, value, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_impl(std::shared_ptr<Impl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
void Tensor<T>::check_defined() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  check_defined();
  return impl_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) throw DimensionError("dimension " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[i];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  check_defined();
  return impl_->data->size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  check_defined();
  return *impl_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  check_defined();
  return *impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
  return (*impl_->data)[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  check_defined();
  return impl_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  if (!is_leaf()) throw UsageError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = value;
  if (!value) {
    impl_->grad.clear();
    impl_->has_grad = false;
  }
  return *this;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  check_defined();
  return impl_->tape.expired();
}

template <typename T>
bool Tensor<T>::has_grad() const {
  check_defined();
  return impl_->has_grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient");
  return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!requires_grad()) throw UsageError("mutable_grad() on a tensor that does not require grad");
  return impl_->grad_buffer();
}

template <typename T>
void Tensor<T>::clear_grad() {
  check_defined();
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
  impl_->has_grad = false;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  check_defined();
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return from_impl(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  check_defined();
  Tensor out(impl_->shape);
  *out.impl_->data = *impl_->data;
  return out;
}

template <typename T>
Tape<T>::Tape() : state_(std::make_shared<detail::TapeState<T>>()) {}

template <typename T>
std::size_t Tape<T>::size() const {
  return state_->nodes.size();
}

template <typename T>
bool Tape<T>::consumed() const {
  return state_->consumed;
}

template <typename T>
bool Tape<T>::any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(Tensor<T>& output, std::initializer_list<const Tensor<T>*> inputs, BackwardFn backward) {
  if (state_->consumed) throw UsageError("cannot record onto a tape that has already been consumed by backward()");
  Node node;
  for (const Tensor<T>* in : inputs) {
    if (auto other = in->impl()->tape.lock(); other && other != state_ && !other->consumed) {
      throw UsageError("operation mixes tensors from two different live tapes; detach() one of them");
    }
    node.inputs.push_back(in->impl());
  }
  output.impl()->requires_grad = true;
  output.impl()->tape = state_;
  node.output = output.impl();
  node.backward = std::move(backward);
  state_->nodes.push_back(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw UsageError("backward() on an undefined tensor");
  if (loss.numel() != 1) throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  auto state = loss.impl()->tape.lock();
  if (!state) throw UsageError("backward(): loss is not attached to a live tape");
  if (state->consumed) throw UsageError("backward(): tape already consumed by a previous backward()");
  state->consumed = true;

  loss.impl()->grad_buffer()[0] += T(1);
  for (auto it = state->nodes.rbegin(); it != state->nodes.rend(); ++it) {
    if (!it->output->has_grad) continue;  // not reachable from the loss
    it->backward(*it);
  }
  state->nodes.clear();
  state->nodes.shrink_to_fit();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace dacount
