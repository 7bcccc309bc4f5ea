#pragma once

#include <array>
#include <string>

#include "ssr/autodiff/ops.hpp"

namespace ssr::ad {

/// Stride/padding per spatial axis, depth first. 2-D ops leave depth at 1/0.
struct ConvParams {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
  std::array<std::size_t, 3> output_padding{0, 0, 0};  // transposed only

  static ConvParams planar(std::size_t stride, std::size_t pad, std::size_t out_pad = 0) {
    return {{1, stride, stride}, {0, pad, pad}, {0, out_pad, out_pad}};
  }
  static ConvParams volumetric(std::size_t stride, std::size_t pad, std::size_t out_pad = 0) {
    return {{stride, stride, stride}, {pad, pad, pad}, {out_pad, out_pad, out_pad}};
  }
};

namespace detail {

// Geometry of a correlation between an "image" grid [channels, in] and a
// "column" grid `out`, i.e. a plain convolution from in to out.
struct ConvGeometry {
  std::size_t channels = 0;
  std::array<std::size_t, 3> in{};
  std::array<std::size_t, 3> kernel{};
  std::array<std::size_t, 3> stride{};
  std::array<std::size_t, 3> pad{};
  std::array<std::size_t, 3> out{};

  std::size_t in_size() const { return in[0] * in[1] * in[2]; }
  std::size_t out_size() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_size() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t rows() const { return channels * kernel_size(); }
};

template <typename Real>
void im2col(const ConvGeometry& g, const Real* image, Real* col) {
  const std::size_t P = g.out_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          Real* dst = col + row * P;
          const Real* chan = image + c * g.in_size();
          std::size_t p = 0;
          for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
            const long iz = long(oz * g.stride[0] + kz) - long(g.pad[0]);
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
              const long iy = long(oy * g.stride[1] + ky) - long(g.pad[1]);
              const bool row_ok = iz >= 0 && iz < long(g.in[0]) && iy >= 0 && iy < long(g.in[1]);
              const Real* src = row_ok ? chan + (std::size_t(iz) * g.in[1] + std::size_t(iy)) * g.in[2]
                                       : nullptr;
              for (std::size_t ox = 0; ox < g.out[2]; ++ox, ++p) {
                const long ix = long(ox * g.stride[2] + kx) - long(g.pad[2]);
                dst[p] = (row_ok && ix >= 0 && ix < long(g.in[2])) ? src[ix] : Real(0);
              }
            }
          }
        }
}

// Adjoint of im2col: scatter-add columns back onto the image grid.
template <typename Real>
void col2im(const ConvGeometry& g, const Real* col, Real* image) {
  const std::size_t P = g.out_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          const Real* src = col + row * P;
          Real* chan = image + c * g.in_size();
          std::size_t p = 0;
          for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
            const long iz = long(oz * g.stride[0] + kz) - long(g.pad[0]);
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
              const long iy = long(oy * g.stride[1] + ky) - long(g.pad[1]);
              if (iz < 0 || iz >= long(g.in[0]) || iy < 0 || iy >= long(g.in[1])) {
                p += g.out[2];
                continue;
              }
              Real* dst = chan + (std::size_t(iz) * g.in[1] + std::size_t(iy)) * g.in[2];
              for (std::size_t ox = 0; ox < g.out[2]; ++ox, ++p) {
                const long ix = long(ox * g.stride[2] + kx) - long(g.pad[2]);
                if (ix >= 0 && ix < long(g.in[2])) dst[ix] += src[p];
              }
            }
          }
        }
}

// Views x as [N, C, D, H, W] (2-D tensors get D = 1).
inline std::array<std::size_t, 5> as_volume(const Shape& s, std::size_t spatial_rank) {
  if (spatial_rank == 2) return {s[0], s[1], 1, s[2], s[3]};
  return {s[0], s[1], s[2], s[3], s[4]};
}

template <typename Real>
void check_conv_shapes(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                       std::size_t spatial_rank, bool transposed, const char* op) {
  const std::size_t rank = spatial_rank + 2;
  if (x.rank() != rank || w.rank() != rank || b.rank() != 1)
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                     " input and weight, got input " + to_string(x.shape()) + " and weight " +
                     to_string(w.shape()));
  const std::size_t in_ch = transposed ? w.dim(0) : w.dim(1);
  const std::size_t out_ch = transposed ? w.dim(1) : w.dim(0);
  if (x.dim(1) != in_ch)
    throw ShapeError(std::string(op) + ": input " + to_string(x.shape()) + " has " +
                     std::to_string(x.dim(1)) + " channels but weight " + to_string(w.shape()) +
                     " expects " + std::to_string(in_ch));
  if (b.dim(0) != out_ch)
    throw ShapeError(std::string(op) + ": bias " + to_string(b.shape()) +
                     " does not match weight " + to_string(w.shape()));
}

template <typename Real>
Tensor<Real> conv_forward(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                          const ConvParams& p, std::size_t spatial_rank, const char* op) {
  check_conv_shapes(x, w, b, spatial_rank, false, op);
  const auto xs = as_volume(x.shape(), spatial_rank);
  const auto ws = as_volume(w.shape(), spatial_rank);
  ConvGeometry g;
  g.channels = xs[1];
  g.in = {xs[2], xs[3], xs[4]};
  g.kernel = {ws[2], ws[3], ws[4]};
  g.stride = p.stride;
  g.pad = p.padding;
  for (int a = 0; a < 3; ++a) {
    const std::size_t padded = g.in[a] + 2 * g.pad[a];
    if (padded < g.kernel[a] || g.stride[a] == 0)
      throw ShapeError(std::string(op) + ": kernel " + to_string(w.shape()) +
                       " larger than padded input " + to_string(x.shape()));
    g.out[a] = (padded - g.kernel[a]) / g.stride[a] + 1;
  }
  const std::size_t N = xs[0], K = ws[0], R = g.rows(), P = g.out_size();
  Shape out_shape = spatial_rank == 2 ? Shape{N, K, g.out[1], g.out[2]}
                                      : Shape{N, K, g.out[0], g.out[1], g.out[2]};
  std::vector<Real> out(N * K * P);
  const bool record = grad_enabled() && (x.requires_grad() || w.requires_grad() || b.requires_grad());
  std::vector<Real> cols(record ? N * R * P : R * P);
  ConstMatMap<Real> wm(w.raw(), K, R);
  for (std::size_t n = 0; n < N; ++n) {
    Real* col = cols.data() + (record ? n * R * P : 0);
    im2col(g, x.raw() + n * g.channels * g.in_size(), col);
    MatMap<Real> y(out.data() + n * K * P, K, P);
    y.noalias() = wm * ConstMatMap<Real>(col, R, P);
    for (std::size_t k = 0; k < K; ++k) y.row(k).array() += b[k];
  }
  return make_result<Real>(std::move(out_shape), std::move(out), op, {x, w, b}, [&] {
    return [g, N, K, R, P, cols = std::move(cols)](const Node<Real>& self) {
      auto& xn = *self.inputs[0];
      auto& wn = *self.inputs[1];
      auto& bn = *self.inputs[2];
      if (xn.requires_grad) xn.ensure_grad();
      if (wn.requires_grad) wn.ensure_grad();
      if (bn.requires_grad) bn.ensure_grad();
      RowMatrix<Real> dcol(R, P);
      for (std::size_t n = 0; n < N; ++n) {
        ConstMatMap<Real> gy(self.grad.data() + n * K * P, K, P);
        ConstMatMap<Real> col(cols.data() + n * R * P, R, P);
        if (wn.requires_grad)
          MatMap<Real>(wn.grad.data(), K, R).noalias() += gy * col.transpose();
        if (bn.requires_grad)
          for (std::size_t k = 0; k < K; ++k) {
            // Plain loop: Eigen's vectorized sum peels by pointer alignment,
            // which makes the result depend on where the buffer landed.
            const Real* row = self.grad.data() + (n * K + k) * P;
            Real acc = 0;
            for (std::size_t i = 0; i < P; ++i) acc += row[i];
            bn.grad[k] += acc;
          }
        if (xn.requires_grad) {
          dcol.noalias() = ConstMatMap<Real>(wn.value.data(), K, R).transpose() * gy;
          col2im(g, dcol.data(), xn.grad.data() + n * g.channels * g.in_size());
        }
      }
    };
  });
}

// Weight layout [C_in, C_out, k...]; the forward pass is the input-adjoint
// of the matching plain convolution.
template <typename Real>
Tensor<Real> conv_transpose_forward(const Tensor<Real>& x, const Tensor<Real>& w,
                                    const Tensor<Real>& b, const ConvParams& p,
                                    std::size_t spatial_rank, const char* op) {
  check_conv_shapes(x, w, b, spatial_rank, true, op);
  const auto xs = as_volume(x.shape(), spatial_rank);
  const auto ws = as_volume(w.shape(), spatial_rank);
  const std::size_t N = xs[0], C = xs[1], K = ws[1];
  ConvGeometry g;  // image = output grid, columns = input grid
  g.channels = K;
  g.kernel = {ws[2], ws[3], ws[4]};
  g.stride = p.stride;
  g.pad = p.padding;
  g.out = {xs[2], xs[3], xs[4]};
  for (int a = 0; a < 3; ++a) {
    const long full = long((g.out[a] - 1) * g.stride[a] + g.kernel[a] + p.output_padding[a]) -
                      long(2 * g.pad[a]);
    if (full <= 0 || (p.output_padding[a] > 0 && p.output_padding[a] >= g.stride[a]))
      throw ShapeError(std::string(op) + ": invalid geometry for input " + to_string(x.shape()) +
                       " and weight " + to_string(w.shape()));
    g.in[a] = std::size_t(full);
  }
  const std::size_t R = g.rows(), P = g.out_size(), S = g.in_size();
  Shape out_shape = spatial_rank == 2 ? Shape{N, K, g.in[1], g.in[2]}
                                      : Shape{N, K, g.in[0], g.in[1], g.in[2]};
  std::vector<Real> out(N * K * S, Real(0));
  RowMatrix<Real> col(R, P);
  ConstMatMap<Real> wm(w.raw(), C, R);
  for (std::size_t n = 0; n < N; ++n) {
    col.noalias() = wm.transpose() * ConstMatMap<Real>(x.raw() + n * C * P, C, P);
    Real* y = out.data() + n * K * S;
    col2im(g, col.data(), y);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t s = 0; s < S; ++s) y[k * S + s] += b[k];
  }
  return make_result<Real>(std::move(out_shape), std::move(out), op, {x, w, b}, [&] {
    return [g, N, C, K, R, P, S](const Node<Real>& self) {
      auto& xn = *self.inputs[0];
      auto& wn = *self.inputs[1];
      auto& bn = *self.inputs[2];
      if (xn.requires_grad) xn.ensure_grad();
      if (wn.requires_grad) wn.ensure_grad();
      if (bn.requires_grad) bn.ensure_grad();
      RowMatrix<Real> dcol(R, P);
      for (std::size_t n = 0; n < N; ++n) {
        const Real* gy = self.grad.data() + n * K * S;
        if (bn.requires_grad)
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t s = 0; s < S; ++s) bn.grad[k] += gy[k * S + s];
        if (!xn.requires_grad && !wn.requires_grad) continue;
        im2col(g, gy, dcol.data());
        if (xn.requires_grad)
          MatMap<Real>(xn.grad.data() + n * C * P, C, P).noalias() +=
              ConstMatMap<Real>(wn.value.data(), C, R) * dcol;
        if (wn.requires_grad)
          MatMap<Real>(wn.grad.data(), C, R).noalias() +=
              ConstMatMap<Real>(xn.value.data() + n * C * P, C, P) * dcol.transpose();
      }
    };
  });
}

}  // namespace detail

/// x[N,C,H,W], w[K,C,kh,kw], b[K] -> [N,K,H',W'].
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    std::size_t stride = 1, std::size_t padding = 0) {
  return detail::conv_forward(x, w, b, ConvParams::planar(stride, padding), 2, "conv2d");
}

/// x[N,C,H,W], w[C,K,kh,kw], b[K] -> [N,K,(H-1)s-2p+kh+op, ...].
template <typename Real>
Tensor<Real> conv_transpose2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                              std::size_t stride = 1, std::size_t padding = 0,
                              std::size_t output_padding = 0) {
  return detail::conv_transpose_forward(x, w, b, ConvParams::planar(stride, padding, output_padding),
                                        2, "conv_transpose2d");
}

template <typename Real>
Tensor<Real> conv3d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    std::size_t stride = 1, std::size_t padding = 0) {
  return detail::conv_forward(x, w, b, ConvParams::volumetric(stride, padding), 3, "conv3d");
}

template <typename Real>
Tensor<Real> conv_transpose3d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                              std::size_t stride = 1, std::size_t padding = 0,
                              std::size_t output_padding = 0) {
  return detail::conv_transpose_forward(
      x, w, b, ConvParams::volumetric(stride, padding, output_padding), 3, "conv_transpose3d");
}

}  // namespace ssr::ad
