#pragma once

#include "ssr/autodiff/ops.hpp"

namespace ssr::ad {

namespace detail {
inline std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (long(n) - 1);
  i = ((i % period) + period) % period;
  return std::size_t(i < long(n) ? i : period - i);
}
}  // namespace detail

/// Reflect-pads the two trailing axes of [N,C,H,W] at the bottom/right edge.
template <typename Real>
Tensor<Real> pad_reflect2d(const Tensor<Real>& x, std::size_t pad_bottom, std::size_t pad_right) {
  if (x.rank() != 4) throw ShapeError("pad_reflect2d: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H + pad_bottom, Wo = W + pad_right;
  std::vector<std::size_t> src(Ho * Wo);
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t c = 0; c < Wo; ++c)
      src[y * Wo + c] = detail::reflect_index(long(y), H) * W + detail::reflect_index(long(c), W);
  std::vector<Real> out(NC * Ho * Wo);
  for (std::size_t p = 0; p < NC; ++p)
    for (std::size_t i = 0; i < Ho * Wo; ++i) out[p * Ho * Wo + i] = x[p * H * W + src[i]];
  return make_result<Real>(Shape{x.dim(0), x.dim(1), Ho, Wo}, std::move(out), "pad_reflect2d", {x},
                           [&] {
                             return [NC, H, W, Ho, Wo, src = std::move(src)](const Node<Real>& self) {
                               auto& in = *self.inputs[0];
                               in.ensure_grad();
                               for (std::size_t p = 0; p < NC; ++p)
                                 for (std::size_t i = 0; i < Ho * Wo; ++i)
                                   in.grad[p * H * W + src[i]] += self.grad[p * Ho * Wo + i];
                             };
                           });
}

/// Keeps the top-left [h, w] window of [N,C,H,W].
template <typename Real>
Tensor<Real> crop2d(const Tensor<Real>& x, std::size_t h, std::size_t w) {
  if (x.rank() != 4 || h > x.dim(2) || w > x.dim(3) || h == 0 || w == 0)
    throw ShapeError("crop2d: cannot crop " + to_string(x.shape()) + " to " + std::to_string(h) +
                     "x" + std::to_string(w));
  const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<Real> out(NC * h * w);
  for (std::size_t p = 0; p < NC; ++p)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.raw() + (p * H + y) * W, w, out.data() + (p * h + y) * w);
  return make_result<Real>(Shape{x.dim(0), x.dim(1), h, w}, std::move(out), "crop2d", {x}, [=] {
    return [=](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t c = 0; c < w; ++c)
            in.grad[(p * H + y) * W + c] += self.grad[(p * h + y) * w + c];
    };
  });
}

}  // namespace ssr::ad
