#include "dacount/params.hpp"

#include <algorithm>
#include <cmath>

#include "dacount/errors.hpp"

namespace dacount {

template <typename T>
void ModelParams<T>::add(std::string name, Tensor<T> value) {
  if (contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  if (!value.is_leaf()) throw UsageError("parameter '" + name + "' must be a leaf tensor");
  value.set_requires_grad(true);
  entries_.push_back(Entry{std::move(name), std::move(value), {}, {}});
}

template <typename T>
bool ModelParams<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

template <typename T>
const Tensor<T>& ModelParams<T>::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw UsageError("unknown parameter '" + name + "'");
}

template <typename T>
Tensor<T>& ModelParams<T>::at(const std::string& name) {
  return const_cast<Tensor<T>&>(std::as_const(*this).at(name));
}

template <typename T>
std::vector<std::string> ModelParams<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::frozen() const {
  ModelParams out;
  for (const auto& e : entries_) out.entries_.push_back(Entry{e.name, e.value.detach(), {}, {}});
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  ModelParams out;
  for (const auto& e : entries_) {
    Tensor<T> copy = e.value.clone();
    copy.set_requires_grad(true);
    out.entries_.push_back(Entry{e.name, std::move(copy), e.m, e.v});
  }
  out.adam_step = adam_step;
  return out;
}

template <typename T>
void ModelParams<T>::clear_grads() {
  for (auto& e : entries_) e.value.clear_grad();
}

template <typename T>
void adam_step(ModelParams<T>& params, const AdamConfig& cfg) {
  for (const auto& e : params.entries()) {
    if (!e.value.has_grad()) throw UsageError("adam_step: parameter '" + e.name + "' has no gradient");
  }
  const std::int64_t t = ++params.adam_step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  for (auto& e : params.entries()) {
    auto w = e.value.mutable_data();
    auto g = e.value.grad();
    if (e.m.size() != w.size()) {
      e.m.assign(w.size(), T(0));
      e.v.assign(w.size(), T(0));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.m[i] = b1 * e.m[i] + (T(1) - b1) * g[i];
      e.v[i] = b2 * e.v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step * e.m[i] / (std::sqrt(e.v[i]) * inv_sqrt_bc2 + eps);
    }
    e.value.clear_grad();
  }
}

template class ModelParams<float>;
template class ModelParams<double>;
template void adam_step<float>(ModelParams<float>&, const AdamConfig&);
template void adam_step<double>(ModelParams<double>&, const AdamConfig&);

}  // namespace dacount
