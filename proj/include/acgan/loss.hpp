#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "acgan/tensor.hpp"

namespace acgan {

// Mean over the batch of -log softmax(logits)[label]. logits [N,C].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2)
    throw DimensionError("softmax_cross_entropy expects [N,C] logits, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");

  std::vector<T> probs(n * c);
  T loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.data().data() + r * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[r * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    loss += std::log(z) + mx - row[labels[r]];
  }
  loss /= static_cast<T>(n);

  auto pl = logits.handle();
  std::vector<int> y(labels.begin(), labels.end());
  return detail::make_result<T>(
      "softmax_cross_entropy", {}, {loss}, {pl},
      [pl, probs = std::move(probs), y = std::move(y), n, c](detail::Node<T>& self) {
        auto& g = pl->grad_buffer();
        const T s = self.grad[0] / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < c; ++j)
            g[r * c + j] += s * (probs[r * c + j] - (static_cast<int>(j) == y[r] ? T(1) : T(0)));
      });
}

// Mean binary cross-entropy of sigmoid(logits) against binary targets, in the fused form
// max(x,0) - x*t + log(1 + exp(-|x|)). logits [N] (or [N,1]).
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets) {
  const std::size_t n = logits.numel();
  if (targets.size() != n)
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " logits");
  for (T t : targets)
    if (t != T(0) && t != T(1)) throw std::invalid_argument("bce_with_logits targets must be 0 or 1");

  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits.data()[i];
    loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<T>(n);

  auto pl = logits.handle();
  std::vector<T> t(targets.begin(), targets.end());
  return detail::make_result<T>("bce_with_logits", {}, {loss}, {pl},
                                [pl, t = std::move(t), n](detail::Node<T>& self) {
                                  auto& g = pl->grad_buffer();
                                  const T s = self.grad[0] / static_cast<T>(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T x = pl->value[i];
                                    const T p = T(1) / (T(1) + std::exp(-x));
                                    g[i] += s * (p - t[i]);
                                  }
                                });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, T target) {
  std::vector<T> t(logits.numel(), target);
  return bce_with_logits(logits, std::span<const T>(t));
}

}  // namespace acgan
