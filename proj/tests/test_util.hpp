#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "acgan/acgan.hpp"

namespace testutil {

using acgan::Shape;
using acgan::Tensor;

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(acgan::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// |a - b| / max(|b|, 1) elementwise, worst case.
template <typename A, typename B>
double max_rel_diff(const A& a, const B& b) {
  double worst = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(y), 1.0));
  }
  return worst;
}

// Direct six-loop convolution, double accumulation.
template <typename T>
std::vector<double> conv2d_oracle(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, std::size_t stride,
                                  std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * cout * oh * ow);
  auto xd = x.data();
  auto kd = k.data();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = b.data()[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                s += static_cast<double>(xd[((a * cin + c) * h + yy) * w + xx]) *
                     static_cast<double>(kd[((o * cin + c) * kh + u) * kw + v]);
              }
          out[((a * cout + o) * oh + i) * ow + j] = s;
        }
  return out;
}

// Scatter form: every input pixel adds kernel * value into the upsampled output.
template <typename T>
std::vector<double> conv_transpose2d_oracle(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b,
                                            std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h - 1) * stride + kh - 2 * pad, ow = (w - 1) * stride + kw - 2 * pad;
  std::vector<double> out(n * cout * oh * ow);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t p = 0; p < oh * ow; ++p) out[(a * cout + o) * oh * ow + p] = b.data()[o];
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow)) continue;
                out[((a * cout + o) * oh + yy) * ow + xx] +=
                    static_cast<double>(x.data()[((a * cin + c) * h + i) * w + j]) *
                    static_cast<double>(k.data()[((c * cout + o) * kh + u) * kw + v]);
              }
  return out;
}

template <typename T>
std::vector<double> matmul_oracle(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b) {
  const std::size_t n = x.dim(0), f = x.dim(1), g = wt.dim(1);
  std::vector<double> out(n * g);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      double s = b.data()[c];
      for (std::size_t i = 0; i < f; ++i)
        s += static_cast<double>(x.data()[r * f + i]) * static_cast<double>(wt.data()[i * g + c]);
      out[r * g + c] = s;
    }
  return out;
}

// 32x32 ACGAN with narrow channels for fast structural tests.
template <typename T = float>
acgan::AcganModel<T> tiny_model(std::uint64_t seed, std::size_t image_size = 32, std::size_t z_dim = 8) {
  auto g = acgan::GeneratorSpec::defaults(image_size, 2, z_dim);
  for (auto& c : g.channels) c = std::max<std::size_t>(c / 8, 2);
  auto d = acgan::DiscriminatorSpec::defaults(image_size, 2);
  for (auto& c : d.convs) c.out_channels = std::max<std::size_t>(c.out_channels / 8, 2);
  return acgan::make_model<T>(g, d, seed);
}

}  // namespace testutil
