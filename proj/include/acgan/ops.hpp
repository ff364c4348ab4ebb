#pragma once

// Eigen's coefficient-based path for small products sums with a start offset that
// depends on buffer alignment, so identical inputs in different allocations could
// round differently. GEMM/GEMV kernels do not.
#ifndef EIGEN_GEMM_TO_COEFFBASED_THRESHOLD
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#endif
#include <Eigen/Core>
#if EIGEN_GEMM_TO_COEFFBASED_THRESHOLD != 0
#error "include acgan headers before Eigen, or define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD to 0"
#endif

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "acgan/tensor.hpp"

namespace acgan {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_result<T>("add", a.shape(), std::move(out), {pa, pb},
                                [pa, pb](detail::Node<T>& self) {
                                  for (auto* p : {pa.get(), pb.get()}) {
                                    if (!p->requires_grad) continue;
                                    auto& g = p->grad_buffer();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_result<T>("mul", a.shape(), std::move(out), {pa, pb},
                                [pa, pb](detail::Node<T>& self) {
                                  if (pa->requires_grad) {
                                    auto& g = pa->grad_buffer();
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += self.grad[i] * pb->value[i];
                                  }
                                  if (pb->requires_grad) {
                                    auto& g = pb->grad_buffer();
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += self.grad[i] * pa->value[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  auto pa = a.handle();
  return detail::make_result<T>("scale", a.shape(), std::move(out), {pa},
                                [pa, factor](detail::Node<T>& self) {
                                  auto& g = pa->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += factor * self.grad[i];
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  auto pa = a.handle();
  return detail::make_result<T>("sum", {}, {total}, {pa}, [pa](detail::Node<T>& self) {
    auto& g = pa->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Shares no storage with the input; the element order is unchanged.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto pa = a.handle();
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {pa},
                                [pa](detail::Node<T>& self) {
                                  auto& g = pa->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                });
}

// [N, C, H, W] -> [N, C*H*W]
template <typename T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 2) throw DimensionError("flatten needs rank >= 2, got " + shape_str(a.shape()));
  return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

// Concatenates two matrices along the feature axis: [N,F1] ++ [N,F2] -> [N,F1+F2].
template <typename T>
Tensor<T> concat_features(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_features: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t n = a.dim(0), fa = a.dim(1), fb = b.dim(1), f = fa + fb;
  std::vector<T> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data().begin() + r * fa, fa, out.begin() + r * f);
    std::copy_n(b.data().begin() + r * fb, fb, out.begin() + r * f + fa);
  }
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_result<T>(
      "concat_features", {n, f}, std::move(out), {pa, pb},
      [pa, pb, n, fa, fb, f](detail::Node<T>& self) {
        if (pa->requires_grad) {
          auto& g = pa->grad_buffer();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < fa; ++j) g[r * fa + j] += self.grad[r * f + j];
        }
        if (pb->requires_grad) {
          auto& g = pb->grad_buffer();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < fb; ++j) g[r * fb + j] += self.grad[r * f + fa + j];
        }
      });
}

// input [N,F] x weight [F,G] + bias [G] -> [N,G]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1)
    throw DimensionError("linear expects [N,F], [F,G], [G]; got " + shape_str(input.shape()) +
                         ", " + shape_str(weight.shape()) + ", " + shape_str(bias.shape()));
  const std::size_t n = input.dim(0), f = input.dim(1), g = weight.dim(1);
  if (weight.dim(0) != f || bias.dim(0) != g)
    throw DimensionError("linear: inner dimensions disagree: " + shape_str(input.shape()) + ", " +
                         shape_str(weight.shape()) + ", " + shape_str(bias.shape()));
  std::vector<T> out(n * g);
  {
    detail::ConstMatrixMap<T> x(input.data().data(), n, f);
    detail::ConstMatrixMap<T> w(weight.data().data(), f, g);
    detail::MatrixMap<T> y(out.data(), n, g);
    y.noalias() = x * w;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < g; ++c) out[r * g + c] += bias.data()[c];
  }
  auto px = input.handle();
  auto pw = weight.handle();
  auto pb = bias.handle();
  return detail::make_result<T>(
      "linear", {n, g}, std::move(out), {px, pw, pb}, [px, pw, pb, n, f, g](detail::Node<T>& self) {
        detail::ConstMatrixMap<T> dy(self.grad.data(), n, g);
        if (px->requires_grad) {
          detail::MatrixMap<T> dx(px->grad_buffer().data(), n, f);
          detail::ConstMatrixMap<T> w(pw->value.data(), f, g);
          dx.noalias() += dy * w.transpose();
        }
        if (pw->requires_grad) {
          detail::MatrixMap<T> dw(pw->grad_buffer().data(), f, g);
          detail::ConstMatrixMap<T> x(px->value.data(), n, f);
          dw.noalias() += x.transpose() * dy;
        }
        if (pb->requires_grad) {
          auto& db = pb->grad_buffer();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < g; ++c) db[c] += self.grad[r * g + c];
        }
      });
}

// Subgradient at exactly 0 is taken as `slope`.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
  if (!(slope >= T(0) && slope < T(1)))
    throw std::invalid_argument("leaky_relu slope must lie in [0, 1)");
  std::vector<T> out(input.data().begin(), input.data().end());
  for (auto& v : out)
    if (!(v > T(0))) v *= slope;
  auto px = input.handle();
  return detail::make_result<T>("leaky_relu", input.shape(), std::move(out), {px},
                                [px, slope](detail::Node<T>& self) {
                                  auto& g = px->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += self.grad[i] * (px->value[i] > T(0) ? T(1) : slope);
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return leaky_relu(input, T(0));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(input.data()[i]);
  auto px = input.handle();
  return detail::make_result<T>("tanh", input.shape(), std::move(out), {px},
                                [px](detail::Node<T>& self) {
                                  auto& g = px->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                    const T y = self.value[i];
                                    g[i] += self.grad[i] * (T(1) - y * y);
                                  }
                                });
}

// Row-wise softmax of a [N,C] tensor; forward only.
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows expects [N,C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<T> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.data().data() + r * c;
    T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (out[r * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= z;
  }
  return out;
}

// Index of the largest entry in each row; ties go to the lower index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects [N,C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.data().data() + r * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace acgan
