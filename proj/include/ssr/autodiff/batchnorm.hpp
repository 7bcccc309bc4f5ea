#pragma once

#include "ssr/autodiff/ops.hpp"

namespace ssr::ad {

enum class Mode { train, eval };

/// Running statistics owned by a batch-norm layer (not trainable).
template <typename Real>
struct RunningStats {
  std::vector<Real> mean;
  std::vector<Real> var;

  explicit RunningStats(std::size_t channels = 0)
      : mean(channels, Real(0)), var(channels, Real(1)) {}
};

/// Per-channel normalization over every axis but dim 1. Train mode uses the
/// biased batch variance for normalization and folds the unbiased one into
/// the running estimate with `momentum`.
template <typename Real>
Tensor<Real> batch_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        RunningStats<Real>& stats, Mode mode, Real momentum = Real(0.1),
                        Real eps = Real(1e-5)) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input needs a channel axis, got " + to_string(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.numel() / (N * C);
  if (gamma.numel() != C || beta.numel() != C || stats.mean.size() != C)
    throw ShapeError("batch_norm: " + std::to_string(C) + " channels but affine params " +
                     to_string(gamma.shape()));
  const std::size_t M = N * S;
  std::vector<Real> mu(C), inv_std(C);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      Real s = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) s += x[(n * C + c) * S + i];
      const Real m = s / Real(M);
      Real v = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) {
          const Real d = x[(n * C + c) * S + i] - m;
          v += d * d;
        }
      v /= Real(M);
      mu[c] = m;
      inv_std[c] = Real(1) / std::sqrt(v + eps);
      const Real unbiased = M > 1 ? v * Real(M) / Real(M - 1) : v;
      stats.mean[c] = (Real(1) - momentum) * stats.mean[c] + momentum * m;
      stats.var[c] = (Real(1) - momentum) * stats.var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = Real(1) / std::sqrt(stats.var[c] + eps);
    }
  }
  std::vector<Real> xhat(x.numel()), out(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t j = (n * C + c) * S + i;
        xhat[j] = (x[j] - mu[c]) * inv_std[c];
        out[j] = gamma[c] * xhat[j] + beta[c];
      }
  return make_result<Real>(x.shape(), std::move(out), "batch_norm", {x, gamma, beta}, [&] {
    return [N, C, S, M, mode, inv_std = std::move(inv_std),
            xhat = std::move(xhat)](const Node<Real>& self) {
      auto& xn = *self.inputs[0];
      auto& gn = *self.inputs[1];
      auto& bn = *self.inputs[2];
      if (xn.requires_grad) xn.ensure_grad();
      if (gn.requires_grad) gn.ensure_grad();
      if (bn.requires_grad) bn.ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        Real sum_g = 0, sum_gx = 0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t i = 0; i < S; ++i) {
            const std::size_t j = (n * C + c) * S + i;
            sum_g += self.grad[j];
            sum_gx += self.grad[j] * xhat[j];
          }
        if (gn.requires_grad) gn.grad[c] += sum_gx;
        if (bn.requires_grad) bn.grad[c] += sum_g;
        if (!xn.requires_grad) continue;
        const Real g = gn.value[c];
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t i = 0; i < S; ++i) {
            const std::size_t j = (n * C + c) * S + i;
            if (mode == Mode::train)
              xn.grad[j] += g * inv_std[c] / Real(M) *
                            (Real(M) * self.grad[j] - sum_g - xhat[j] * sum_gx);
            else
              xn.grad[j] += g * inv_std[c] * self.grad[j];
          }
      }
    };
  });
}

}  // namespace ssr::ad
