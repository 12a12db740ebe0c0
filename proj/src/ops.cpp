#include "dacount/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "dacount/errors.hpp"

namespace dacount::ops {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

struct Layout {
  std::size_t n = 1, c = 0, h = 0, w = 0;
  bool batched = false;

  std::size_t plane() const { return h * w; }
  Shape shape_with(std::size_t channels, std::size_t height, std::size_t width) const {
    return batched ? Shape{n, channels, height, width} : Shape{channels, height, width};
  }
};

template <typename T>
Layout spatial_layout(const Tensor<T>& t, const char* op) {
  const auto& s = t.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_str(s));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Valid output columns [lo, hi) whose input column ox*stride + kj - pad lies
// inside [0, w).
inline void valid_range(std::size_t wo, std::size_t w, std::size_t kj, std::size_t stride, std::size_t pad,
                        std::size_t& lo, std::size_t& hi) {
  lo = kj >= pad ? 0 : (pad - kj + stride - 1) / stride;
  // need ox*stride + kj - pad <= w - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(w) - 1 + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(kj);
  hi = top < 0 ? 0 : std::min(wo, static_cast<std::size_t>(top) / stride + 1);
  if (lo > hi) lo = hi;
}

// Rows of `col` are (c, ki, kj) triples; columns are (n, oy, ox).
template <typename T>
void im2col(const T* x, const Layout& in, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, T* col) {
  const std::size_t p = ho * wo;
  const std::size_t np = in.n * p;
  for (std::size_t c = 0; c < in.c; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        std::size_t lo = 0, hi = 0;
        valid_range(wo, in.w, kj, stride, pad, lo, hi);
        T* row = col + ((c * k + ki) * k + kj) * np;
        for (std::size_t n = 0; n < in.n; ++n) {
          const T* plane = x + (n * in.c + c) * in.plane();
          T* dst = row + n * p;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            T* drow = dst + oy * wo;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) {
              std::fill(drow, drow + wo, T(0));
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(iy) * in.w;
            std::fill(drow, drow + lo, T(0));
            if (stride == 1) {
              if (hi > lo) std::copy_n(src + (lo + kj - pad), hi - lo, drow + lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) drow[ox] = src[ox * stride + kj - pad];
            }
            std::fill(drow + hi, drow + wo, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const Layout& in, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
                std::size_t wo, T* dx) {
  const std::size_t p = ho * wo;
  const std::size_t np = in.n * p;
  for (std::size_t c = 0; c < in.c; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        std::size_t lo = 0, hi = 0;
        valid_range(wo, in.w, kj, stride, pad, lo, hi);
        const T* row = col + ((c * k + ki) * k + kj) * np;
        for (std::size_t n = 0; n < in.n; ++n) {
          T* plane = dx + (n * in.c + c) * in.plane();
          const T* src = row + n * p;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            T* drow = plane + static_cast<std::size_t>(iy) * in.w;
            const T* srow = src + oy * wo;
            if (stride == 1) {
              T* d = drow + (lo + kj - pad);
              for (std::size_t ox = lo; ox < hi; ++ox) d[ox - lo] += srow[ox];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) drow[ox * stride + kj - pad] += srow[ox];
            }
          }
        }
      }
    }
  }
}

// Elementwise unary op with a derivative expressed from (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& input, Fwd fwd, Deriv deriv) {
  Tensor<T> out(input.shape());
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [deriv](auto& node) {
      auto& in = *node.inputs[0];
      const auto& xs = *in.data;
      const auto& ys = *node.output->data;
      const auto& g = node.output->grad;
      auto gx = in.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xs[i], ys[i]);
    });
  }
  return out;
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - k) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  const Layout in = spatial_layout(input, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight must be [C_out,C_in,k,k], got " + shape_str(weight.shape()));
  }
  const std::size_t cout = weight.dim(0);
  const std::size_t k = weight.dim(2);
  if (weight.dim(1) != in.c) {
    throw DimensionError("conv2d: input channels do not match weight; input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()));
  }
  if (bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(cout) + "], got " + shape_str(bias.shape()));
  }
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (k > in.h + 2 * padding || k > in.w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  const std::size_t ho = conv_out_size(in.h, k, stride, padding);
  const std::size_t wo = conv_out_size(in.w, k, stride, padding);
  const std::size_t p = ho * wo;
  const std::size_t np = in.n * p;
  const std::size_t kk = in.c * k * k;

  auto col = std::make_shared<std::vector<T>>(kk * np);
  im2col(input.data().data(), in, k, stride, padding, ho, wo, col->data());

  Tensor<T> out(in.shape_with(cout, ho, wo));
  ConstMatMap<T> wmat(weight.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
  auto y = out.mutable_data();
  for (std::size_t n = 0; n < in.n; ++n) {
    ConstStridedMap<T> cmat(col->data() + n * p, static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(np)));
    MatMap<T> ymat(y.data() + n * cout * p, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(p));
    ymat.noalias() = wmat * cmat;
  }
  auto b = bias.data();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      T* plane = y.data() + (n * cout + co) * p;
      for (std::size_t i = 0; i < p; ++i) plane[i] += b[co];
    }
  }

  if (Tape<T>::any_requires_grad({&input, &weight, &bias})) {
    if (!weight.requires_grad()) col.reset();  // only the weight gradient needs the patches
    tape.record(out, {&input, &weight, &bias}, [in, cout, k, stride, padding, ho, wo, p, np, kk, col](auto& node) {
      auto& x = *node.inputs[0];
      auto& w = *node.inputs[1];
      auto& bi = *node.inputs[2];
      const auto& g = node.output->grad;

      const auto ci = static_cast<Eigen::Index>(cout);
      const auto pi = static_cast<Eigen::Index>(p);
      const auto ki = static_cast<Eigen::Index>(kk);
      const auto stride_np = Eigen::OuterStride<>(static_cast<Eigen::Index>(np));
      if (w.requires_grad) {
        MatMap<T> gw(w.grad_buffer().data(), ci, ki);
        for (std::size_t n = 0; n < in.n; ++n) {
          ConstMatMap<T> dy(g.data() + n * cout * p, ci, pi);
          ConstStridedMap<T> cmat(col->data() + n * p, ki, pi, stride_np);
          gw.noalias() += dy * cmat.transpose();
        }
      }
      if (bi.requires_grad) {
        auto gb = bi.grad_buffer();
        for (std::size_t n = 0; n < in.n; ++n) {
          for (std::size_t co = 0; co < cout; ++co) {
            const T* plane = g.data() + (n * cout + co) * p;
            T acc = T(0);
            for (std::size_t i = 0; i < p; ++i) acc += plane[i];
            gb[co] += acc;
          }
        }
      }
      if (x.requires_grad) {
        ConstMatMap<T> wmat(w.data->data(), ci, ki);
        std::vector<T> dcol(kk * np);
        for (std::size_t n = 0; n < in.n; ++n) {
          ConstMatMap<T> dy(g.data() + n * cout * p, ci, pi);
          StridedMap<T> dc(dcol.data() + n * p, ki, pi, stride_np);
          dc.noalias() = wmat.transpose() * dy;
        }
        col2im_add(dcol.data(), in, k, stride, padding, ho, wo, x.grad_buffer().data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(Tape<T>& tape, const Tensor<T>& input, std::size_t k, std::size_t stride) {
  const Layout in = spatial_layout(input, "max_pool2d");
  if (k < 1 || stride < 1) throw DimensionError("max_pool2d: window and stride must be >= 1");
  if (k > in.h || k > in.w) {
    throw DimensionError("max_pool2d: window " + std::to_string(k) + " larger than input " + shape_str(input.shape()));
  }
  const std::size_t ho = conv_out_size(in.h, k, stride, 0);
  const std::size_t wo = conv_out_size(in.w, k, stride, 0);
  Tensor<T> out(in.shape_with(in.c, ho, wo));
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto x = input.data();
  auto y = out.mutable_data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const std::size_t base = plane * in.plane();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * in.w + ox * stride;
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            const std::size_t idx = base + (oy * stride + ki) * in.w + ox * stride + kj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [argmax](auto& node) {
      const auto& g = node.output->grad;
      auto gx = node.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(Tape<T>& tape, const Tensor<T>& input) {
  const Layout in = spatial_layout(input, "upsample_nearest2x");
  const std::size_t ho = 2 * in.h, wo = 2 * in.w;
  Tensor<T> out(in.shape_with(in.c, ho, wo));
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const T* src = x.data() + plane * in.plane();
    T* dst = y.data() + plane * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = src[(oy / 2) * in.w + ox / 2];
    }
  }
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [in, ho, wo](auto& node) {
      const auto& g = node.output->grad;
      auto gx = node.inputs[0]->grad_buffer();
      for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
        const T* src = g.data() + plane * ho * wo;
        T* dst = gx.data() + plane * in.plane();
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) dst[(oy / 2) * in.w + ox / 2] += src[oy * wo + ox];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Layout la = spatial_layout(a, "concat_channels");
  const Layout lb = spatial_layout(b, "concat_channels");
  if (la.batched != lb.batched || la.n != lb.n || la.h != lb.h || la.w != lb.w) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t plane = la.plane();
  const std::size_t sa = la.c * plane, sb = lb.c * plane;
  Tensor<T> out(la.shape_with(la.c + lb.c, la.h, la.w));
  auto y = out.mutable_data();
  for (std::size_t n = 0; n < la.n; ++n) {
    std::copy_n(a.data().data() + n * sa, sa, y.data() + n * (sa + sb));
    std::copy_n(b.data().data() + n * sb, sb, y.data() + n * (sa + sb) + sa);
  }
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, {&a, &b}, [n = la.n, sa, sb](auto& node) {
      const auto& g = node.output->grad;
      auto& ia = *node.inputs[0];
      auto& ib = *node.inputs[1];
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = g.data() + i * (sa + sb);
        if (ia.requires_grad) {
          T* d = ia.grad_buffer().data() + i * sa;
          for (std::size_t j = 0; j < sa; ++j) d[j] += src[j];
        }
        if (ib.requires_grad) {
          T* d = ib.grad_buffer().data() + i * sb;
          for (std::size_t j = 0; j < sb; ++j) d[j] += src[sa + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& input, std::size_t begin, std::size_t end) {
  const Layout in = spatial_layout(input, "slice_channels");
  if (begin >= end || end > in.c) {
    throw DimensionError("slice_channels: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") for " + shape_str(input.shape()));
  }
  const std::size_t plane = in.plane();
  const std::size_t width = (end - begin) * plane;
  Tensor<T> out(in.shape_with(end - begin, in.h, in.w));
  auto y = out.mutable_data();
  for (std::size_t n = 0; n < in.n; ++n) {
    std::copy_n(input.data().data() + (n * in.c + begin) * plane, width, y.data() + n * width);
  }
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [in, begin, plane, width](auto& node) {
      const auto& g = node.output->grad;
      auto gx = node.inputs[0]->grad_buffer();
      for (std::size_t n = 0; n < in.n; ++n) {
        T* d = gx.data() + (n * in.c + begin) * plane;
        for (std::size_t j = 0; j < width; ++j) d[j] += g[n * width + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& input, T slope) {
  if (slope < T(0)) throw DimensionError("leaky_relu: slope must be >= 0");
  return unary(
      tape, input, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
  return unary(
      tape, input,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& input) {
  return unary(
      tape, input, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> log_clamped(Tape<T>& tape, const Tensor<T>& input, T floor) {
  return unary(
      tape, input, [floor](T x) { return std::log(std::max(x, floor)); },
      [floor](T x, T) { return x > floor ? T(1) / x : T(0); });
}

template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& input, T scale, T shift) {
  return unary(
      tape, input, [scale, shift](T x) { return scale * x + shift; }, [scale](T, T) { return scale; });
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, {&a, &b}, [](auto& node) {
      node.inputs[0]->accumulate_grad(node.output->grad);
      node.inputs[1]->accumulate_grad(node.output->grad);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, {&a, &b}, [](auto& node) {
      const auto& g = node.output->grad;
      node.inputs[0]->accumulate_grad(g);
      if (node.inputs[1]->requires_grad) {
        auto gb = node.inputs[1]->grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  if (Tape<T>::any_requires_grad({&a, &b})) {
    tape.record(out, {&a, &b}, [](auto& node) {
      const auto& g = node.output->grad;
      auto& ia = *node.inputs[0];
      auto& ib = *node.inputs[1];
      if (ia.requires_grad) {
        auto ga = ia.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (*ib.data)[i];
      }
      if (ib.requires_grad) {
        auto gb = ib.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * (*ia.data)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input) {
  T acc = T(0);
  for (T v : input.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [](auto& node) {
      const T g = node.output->grad[0];
      for (T& v : node.inputs[0]->grad_buffer()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& input) {
  T acc = T(0);
  for (T v : input.data()) acc += v;
  const T n = static_cast<T>(input.numel());
  Tensor<T> out = Tensor<T>::scalar(acc / n);
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [n](auto& node) {
      const T g = node.output->grad[0] / n;
      for (T& v : node.inputs[0]->grad_buffer()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_per_sample(Tape<T>& tape, const Tensor<T>& input) {
  if (input.rank() < 2) throw DimensionError("sum_per_sample: need rank >= 2, got " + shape_str(input.shape()));
  const std::size_t n = input.dim(0);
  const std::size_t stride = input.numel() / n;
  Tensor<T> out(Shape{n});
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < stride; ++j) acc += x[i * stride + j];
    y[i] = acc;
  }
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [n, stride](auto& node) {
      const auto& g = node.output->grad;
      auto gx = node.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < stride; ++j) gx[i * stride + j] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(input.data().begin(), input.data().end()));
  if (Tape<T>::any_requires_grad({&input})) {
    tape.record(out, {&input}, [](auto& node) { node.inputs[0]->accumulate_grad(node.output->grad); });
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  auto p = pred.data();
  auto t = target.data();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = p[i] - t[i];
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  if (Tape<T>::any_requires_grad({&pred, &target})) {
    tape.record(out, {&pred, &target}, [n](auto& node) {
      const T g = node.output->grad[0] * T(2) / static_cast<T>(n);
      auto& ip = *node.inputs[0];
      auto& it = *node.inputs[1];
      const auto& pd = *ip.data;
      const auto& td = *it.data;
      if (ip.requires_grad) {
        auto gp = ip.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g * (pd[i] - td[i]);
      }
      if (it.requires_grad) {
        auto gt = it.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (pd[i] - td[i]);
      }
    });
  }
  return out;
}

#define DACOUNT_INSTANTIATE_OPS(T)                                                                             \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                            std::size_t);                                                                      \
  template Tensor<T> max_pool2d(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> upsample_nearest2x(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> slice_channels(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                                \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> affine(Tape<T>&, const Tensor<T>&, T, T);                                                 \
  template Tensor<T> square(Tape<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> log_clamped(Tape<T>&, const Tensor<T>&, T);                                               \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                          \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                                         \
  template Tensor<T> sum_per_sample(Tape<T>&, const Tensor<T>&);                                               \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                                               \
  template Tensor<T> mse_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

DACOUNT_INSTANTIATE_OPS(float)
DACOUNT_INSTANTIATE_OPS(double)

#undef DACOUNT_INSTANTIATE_OPS

}  // namespace dacount::ops
