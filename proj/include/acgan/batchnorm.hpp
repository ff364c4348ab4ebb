#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "acgan/tensor.hpp"

namespace acgan {

enum class NormMode { train, eval };

struct DegenerateVarianceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Per-channel running estimates; variance is the unbiased batch variance.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  T momentum = T(0.1);

  RunningStats() = default;
  explicit RunningStats(std::size_t channels) : mean(channels, T(0)), var(channels, T(1)) {}
};

// input [N,C,H,W]; gamma, beta [C].
// Train mode normalises with biased batch statistics and, if `stats` is non-null,
// folds them into the running estimates. Eval mode reads `stats` (required).
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      NormMode mode, RunningStats<T>* stats, T epsilon = T(1e-5)) {
  if (input.rank() != 4) throw DimensionError("batchnorm2d expects [N,C,H,W], got " + shape_str(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("batchnorm2d: gamma/beta must have shape [" + std::to_string(c) + "]");
  if (stats && (stats->mean.size() != c || stats->var.size() != c))
    throw DimensionError("batchnorm2d: running stats sized for a different channel count");
  const std::size_t m = n * plane;
  const T* x = input.data().data();

  std::vector<T> mu(c), inv_std(c);
  if (mode == NormMode::train) {
    if (m < 2)
      throw DegenerateVarianceError("batchnorm2d in train mode needs at least 2 values per channel, got " +
                                    std::to_string(m));
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      const T mean = s / static_cast<T>(m);
      T ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) ss += (p[j] - mean) * (p[j] - mean);
      }
      const T var = ss / static_cast<T>(m);
      mu[ch] = mean;
      inv_std[ch] = T(1) / std::sqrt(var + epsilon);
      if (stats) {
        const T mom = stats->momentum;
        stats->mean[ch] = (T(1) - mom) * stats->mean[ch] + mom * mean;
        stats->var[ch] = (T(1) - mom) * stats->var[ch] +
                         mom * var * static_cast<T>(m) / static_cast<T>(m - 1);
      }
    }
  } else {
    if (!stats) throw std::invalid_argument("batchnorm2d in eval mode needs running stats");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats->mean[ch];
      inv_std[ch] = T(1) / std::sqrt(stats->var[ch] + epsilon);
    }
  }

  // xhat is kept for the backward pass.
  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * plane;
      const T gch = gamma.data()[ch], bch = beta.data()[ch];
      for (std::size_t j = 0; j < plane; ++j) {
        const T h = (x[base + j] - mu[ch]) * inv_std[ch];
        xhat[base + j] = h;
        out[base + j] = gch * h + bch;
      }
    }

  auto px = input.handle();
  auto pg = gamma.handle();
  auto pb = beta.handle();
  const bool batch_stats = mode == NormMode::train;
  return detail::make_result<T>(
      "batchnorm2d", input.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, xhat = std::move(xhat), inv_std, n, c, plane, m,
       batch_stats](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              sum_dy[ch] += dy[base + j];
              sum_dy_xhat[ch] += dy[base + j] * xhat[base + j];
            }
          }
        if (pg->requires_grad) {
          auto& gg = pg->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
        }
        if (pb->requires_grad) {
          auto& gb = pb->grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
        }
        if (!px->requires_grad) return;
        auto& gx = px->grad_buffer();
        const T inv_m = T(1) / static_cast<T>(m);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * plane;
            const T scale = pg->value[ch] * inv_std[ch];
            for (std::size_t j = 0; j < plane; ++j) {
              if (batch_stats)
                gx[base + j] += scale * (dy[base + j] - inv_m * sum_dy[ch] -
                                         xhat[base + j] * inv_m * sum_dy_xhat[ch]);
              else
                gx[base + j] += scale * dy[base + j];
            }
          }
      });
}

}  // namespace acgan
