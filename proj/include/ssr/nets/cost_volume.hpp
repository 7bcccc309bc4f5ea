#pragma once

#include "ssr/autodiff/tensor.hpp"

namespace ssr::nets {

/// Stacks left features against right features shifted by d * shift for
/// d = 0 .. max_feature_disparity / shift:
///   out[n, c, d, y, x]     = left[n, c, y, x]
///   out[n, C + c, d, y, x] = right[n, c, y, x - d * shift]   (0 when x < d * shift)
/// Output shape [N, 2C, D, H, W].
template <typename Real>
ad::Tensor<Real> build_cost_volume(const ad::Tensor<Real>& left, const ad::Tensor<Real>& right,
                                   std::size_t max_feature_disparity, std::size_t shift = 1) {
  if (left.shape() != right.shape() || left.rank() != 4)
    throw ad::ShapeError("build_cost_volume: expected two equal [N,C,H,W] maps, got " + ad::to_string(left.shape()) +
                         " and " + ad::to_string(right.shape()));
  if (max_feature_disparity < 1) throw std::invalid_argument("build_cost_volume: feature-level max disparity < 1");
  if (shift < 1) throw std::invalid_argument("build_cost_volume: shift must be positive");
  const std::size_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3);
  const std::size_t D = max_feature_disparity / shift + 1;
  const std::size_t plane = H * W;
  std::vector<Real> out(N * 2 * C * D * plane, Real(0));
  auto at = [&](std::size_t n, std::size_t c, std::size_t d) { return ((n * 2 * C + c) * D + d) * plane; };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const Real* l = left.raw() + (n * C + c) * plane;
      const Real* r = right.raw() + (n * C + c) * plane;
      for (std::size_t d = 0; d < D; ++d) {
        std::copy_n(l, plane, out.data() + at(n, c, d));
        const std::size_t off = d * shift;
        Real* dst = out.data() + at(n, C + c, d);
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = off; x < W; ++x) dst[y * W + x] = r[y * W + x - off];
      }
    }
  return ad::make_result<Real>({N, 2 * C, D, H, W}, std::move(out), "cost_volume", {left, right}, [=] {
    return [=](const ad::Node<Real>& self) {
      auto& L = *self.inputs[0];
      auto& R = *self.inputs[1];
      if (L.requires_grad) L.ensure_grad();
      if (R.requires_grad) R.ensure_grad();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t d = 0; d < D; ++d) {
            const std::size_t off = d * shift;
            const Real* gl = self.grad.data() + ((n * 2 * C + c) * D + d) * plane;
            const Real* gr = self.grad.data() + ((n * 2 * C + C + c) * D + d) * plane;
            if (L.requires_grad) {
              Real* dl = L.grad.data() + (n * C + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) dl[i] += gl[i];
            }
            if (R.requires_grad) {
              Real* dr = R.grad.data() + (n * C + c) * plane;
              for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = off; x < W; ++x) dr[y * W + x - off] += gr[y * W + x];
            }
          }
    };
  });
}

}  // namespace ssr::nets
