#pragma once

// 2-D convolution and transposed convolution over NCHW tensors.
//
// Both lower to one GEMM over a batch-wide column buffer laid out as
// [Cin*kh*kw, N*Ho*Wo]. conv_transpose2d is the adjoint of conv2d: its
// forward is conv2d's input-gradient path and vice versa.

#include <memory>
#include <string>
#include <vector>

#include "acgan/ops.hpp"
#include "acgan/tensor.hpp"

namespace acgan {

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw, stride, padding;
  std::size_t out_h, out_w;             // sliding-window grid

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t grid() const { return out_h * out_w; }
};

namespace detail {

// col[(c,ki,kj), n*grid + oh*out_w + ow] = image[n, c, oh*s-p+ki, ow*s-p+kj] (0 outside)
template <typename T>
void im2col(const T* image, std::size_t batch, const ConvGeometry& g, T* col) {
  const std::size_t cols = batch * g.grid();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* dst = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t n = 0; n < batch; ++n) {
          const T* src = image + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
            const bool row_ok = ih >= 0 && ih < static_cast<long>(g.height);
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
              *dst++ = (row_ok && iw >= 0 && iw < static_cast<long>(g.width))
                           ? src[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)]
                           : T(0);
            }
          }
        }
      }
}

// Scatter-add inverse of im2col; accumulates into `image`.
template <typename T>
void col2im(const T* col, std::size_t batch, const ConvGeometry& g, T* image) {
  const std::size_t cols = batch * g.grid();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* src = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t n = 0; n < batch; ++n) {
          T* dst = image + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
            const bool row_ok = ih >= 0 && ih < static_cast<long>(g.height);
            for (std::size_t ow = 0; ow < g.out_w; ++ow, ++src) {
              const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
              if (row_ok && iw >= 0 && iw < static_cast<long>(g.width))
                dst[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)] += *src;
            }
          }
        }
      }
}

// [N, C, P] <-> [C, N*P]
template <typename T>
void batch_to_channel_major(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(src + (i * c + ch) * p, p, dst + ch * n * p + i * p);
}

template <typename T>
void channel_major_to_batch(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(src + ch * n * p + i * p, p, dst + (i * c + ch) * p);
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
}

}  // namespace detail

inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  if (stride < 1) throw DimensionError("conv stride must be >= 1");
  if (in + 2 * padding < kernel)
    throw DimensionError("conv kernel " + std::to_string(kernel) + " exceeds padded input " +
                         std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

inline std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                                std::size_t stride, std::size_t padding) {
  if (stride < 1) throw DimensionError("conv_transpose stride must be >= 1");
  const long out = static_cast<long>((in - 1) * stride + kernel) - 2 * static_cast<long>(padding);
  if (out <= 0)
    throw DimensionError("conv_transpose parameters give non-positive output extent " +
                         std::to_string(out));
  return static_cast<std::size_t>(out);
}

// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W']
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  detail::require_rank(input.shape(), 4, "conv2d input");
  detail::require_rank(kernel.shape(), 4, "conv2d kernel");
  detail::require_rank(bias.shape(), 1, "conv2d bias");
  const std::size_t n = input.dim(0), cin = input.dim(1);
  const std::size_t cout = kernel.dim(0);
  if (kernel.dim(1) != cin)
    throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                         std::to_string(kernel.dim(1)));
  if (bias.dim(0) != cout) throw DimensionError("conv2d: bias length must equal Cout");

  ConvGeometry g{cin, input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), stride, padding,
                 0, 0};
  g.out_h = conv_output_extent(g.height, g.kh, stride, padding);
  g.out_w = conv_output_extent(g.width, g.kw, stride, padding);
  const std::size_t k = g.rows(), cols = n * g.grid();

  auto col = std::make_shared<std::vector<T>>(k * cols);
  detail::im2col(input.data().data(), n, g, col->data());

  std::vector<T> mat(cout * cols);
  {
    detail::ConstMatrixMap<T> w(kernel.data().data(), cout, k);
    detail::ConstMatrixMap<T> c(col->data(), k, cols);
    detail::MatrixMap<T> y(mat.data(), cout, cols);
    y.noalias() = w * c;
    for (std::size_t co = 0; co < cout; ++co) y.row(co).array() += bias.data()[co];
  }
  std::vector<T> out(mat.size());
  detail::channel_major_to_batch(mat.data(), n, cout, g.grid(), out.data());

  auto px = input.handle();
  auto pk = kernel.handle();
  auto pb = bias.handle();
  if (!pk->requires_grad) col.reset();
  return detail::make_result<T>(
      "conv2d", {n, cout, g.out_h, g.out_w}, std::move(out), {px, pk, pb},
      [px, pk, pb, col, g, n, cout](detail::Node<T>& self) {
        const std::size_t k = g.rows(), cols = n * g.grid();
        std::vector<T> dmat(cout * cols);
        detail::batch_to_channel_major(self.grad.data(), n, cout, g.grid(), dmat.data());
        detail::ConstMatrixMap<T> dy(dmat.data(), cout, cols);
        if (pk->requires_grad) {
          detail::MatrixMap<T> dw(pk->grad_buffer().data(), cout, k);
          detail::ConstMatrixMap<T> c(col->data(), k, cols);
          dw.noalias() += dy * c.transpose();
        }
        if (pb->requires_grad) {
          auto& db = pb->grad_buffer();
          for (std::size_t co = 0; co < cout; ++co) {
            const T* row = dmat.data() + co * cols;
            T s = 0;
            for (std::size_t j = 0; j < cols; ++j) s += row[j];
            db[co] += s;
          }
        }
        if (px->requires_grad) {
          std::vector<T> dcol(k * cols);
          detail::ConstMatrixMap<T> w(pk->value.data(), cout, k);
          detail::MatrixMap<T> dc(dcol.data(), k, cols);
          dc.noalias() = w.transpose() * dy;
          detail::col2im(dcol.data(), n, g, px->grad_buffer().data());
        }
      });
}

// input [N,Cin,H,W], kernel [Cin,Cout,kh,kw], bias [Cout] -> [N,Cout,(H-1)s-2p+kh,...]
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding) {
  detail::require_rank(input.shape(), 4, "conv_transpose2d input");
  detail::require_rank(kernel.shape(), 4, "conv_transpose2d kernel");
  detail::require_rank(bias.shape(), 1, "conv_transpose2d bias");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel.dim(0) != cin)
    throw DimensionError("conv_transpose2d: input has " + std::to_string(cin) +
                         " channels, kernel expects " + std::to_string(kernel.dim(0)));
  const std::size_t cout = kernel.dim(1);
  if (bias.dim(0) != cout) throw DimensionError("conv_transpose2d: bias length must equal Cout");

  // Geometry of the adjoint convolution: the output image is convolved down to the input grid.
  ConvGeometry g{cout, 0, 0, kernel.dim(2), kernel.dim(3), stride, padding, h, w};
  g.height = conv_transpose_output_extent(h, g.kh, stride, padding);
  g.width = conv_transpose_output_extent(w, g.kw, stride, padding);
  const std::size_t k = g.rows(), cols = n * g.grid();

  auto xmat = std::make_shared<std::vector<T>>(cin * cols);
  detail::batch_to_channel_major(input.data().data(), n, cin, g.grid(), xmat->data());
  std::vector<T> col(k * cols);
  {
    detail::ConstMatrixMap<T> wm(kernel.data().data(), cin, k);
    detail::ConstMatrixMap<T> x(xmat->data(), cin, cols);
    detail::MatrixMap<T> c(col.data(), k, cols);
    c.noalias() = wm.transpose() * x;
  }
  const std::size_t plane = g.height * g.width;
  std::vector<T> out(n * cout * plane, T(0));
  detail::col2im(col.data(), n, g, out.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t co = 0; co < cout; ++co) {
      T* p = out.data() + (i * cout + co) * plane;
      const T b = bias.data()[co];
      for (std::size_t j = 0; j < plane; ++j) p[j] += b;
    }

  auto px = input.handle();
  auto pk = kernel.handle();
  auto pb = bias.handle();
  if (!pk->requires_grad) xmat.reset();
  return detail::make_result<T>(
      "conv_transpose2d", {n, cout, g.height, g.width}, std::move(out), {px, pk, pb},
      [px, pk, pb, xmat, g, n, cin, cout](detail::Node<T>& self) {
        const std::size_t k = g.rows(), cols = n * g.grid(), plane = g.height * g.width;
        if (pb->requires_grad) {
          auto& db = pb->grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t co = 0; co < cout; ++co) {
              const T* p = self.grad.data() + (i * cout + co) * plane;
              T s = 0;
              for (std::size_t j = 0; j < plane; ++j) s += p[j];
              db[co] += s;
            }
        }
        if (!pk->requires_grad && !px->requires_grad) return;
        std::vector<T> dcol(k * cols);
        detail::im2col(self.grad.data(), n, g, dcol.data());
        detail::ConstMatrixMap<T> dc(dcol.data(), k, cols);
        if (pk->requires_grad) {
          detail::MatrixMap<T> dw(pk->grad_buffer().data(), cin, k);
          detail::ConstMatrixMap<T> x(xmat->data(), cin, cols);
          dw.noalias() += x * dc.transpose();
        }
        if (px->requires_grad) {
          std::vector<T> dxm(cin * cols);
          detail::ConstMatrixMap<T> wm(pk->value.data(), cin, k);
          detail::MatrixMap<T> dx(dxm.data(), cin, cols);
          dx.noalias() = wm * dc;
          std::vector<T> dxb(dxm.size());
          detail::channel_major_to_batch(dxm.data(), n, cin, g.grid(), dxb.data());
          auto& gx = px->grad_buffer();
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dxb[i];
        }
      });
}

}  // namespace acgan
