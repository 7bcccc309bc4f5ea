#pragma once

#include <limits>

#include "ssr/autodiff/ops.hpp"

namespace ssr::metrics {

using ad::Shape;
using ad::Tensor;

/// Squared disparity error of both views, summed per pixel, divided by H*W
/// and averaged over the batch. Maps are [N, ..., H, W] with matching shapes;
/// background pixels take part like any other.
template <typename Real>
Tensor<Real> disparity_loss(const Tensor<Real>& pred_l, const Tensor<Real>& pred_r, const Tensor<Real>& gt_l,
                            const Tensor<Real>& gt_r) {
  const auto& s = pred_l.shape();
  if (s.size() < 3 || pred_r.shape() != s || gt_l.shape() != s || gt_r.shape() != s)
    throw ad::ShapeError("disparity_loss: shapes " + ad::to_string(s) + ", " + ad::to_string(pred_r.shape()) + ", " +
                         ad::to_string(gt_l.shape()) + ", " + ad::to_string(gt_r.shape()));
  const std::size_t hw = s[s.size() - 1] * s[s.size() - 2];
  const std::size_t batch = pred_l.numel() / hw;
  auto total = ad::add(ad::sum(ad::square(ad::sub(pred_l, gt_l))), ad::sum(ad::square(ad::sub(pred_r, gt_r))));
  return ad::scale(total, Real(1.0 / double(hw * batch)));
}

/// Two-channel form: pred and gt are [N, 2, H, W] with channel 0 the left view.
template <typename Real>
Tensor<Real> disparity_loss(const Tensor<Real>& pred, const Tensor<Real>& gt) {
  if (pred.rank() != 4 || pred.dim(1) != 2 || gt.shape() != pred.shape())
    throw ad::ShapeError("disparity_loss: expected two [N,2,H,W] tensors, got " + ad::to_string(pred.shape()) +
                         " and " + ad::to_string(gt.shape()));
  return disparity_loss(ad::slice(pred, 1, 0, 1), ad::slice(pred, 1, 1, 1), ad::slice(gt, 1, 0, 1),
                        ad::slice(gt, 1, 1, 1));
}

template <typename Real>
constexpr Real default_bce_eps() {
  return std::is_same_v<Real, float> ? Real(1e-7) : Real(1e-12);
}

/// Mean binary cross entropy -(V log p + (1-V) log(1-p)) with p clipped to
/// [eps, 1-eps]. `target` holds 0/1 values.
template <typename Real>
Tensor<Real> volume_loss(const Tensor<Real>& prob, const Tensor<Real>& target, Real eps = default_bce_eps<Real>()) {
  if (prob.shape() != target.shape())
    throw ad::ShapeError("volume_loss: " + ad::to_string(prob.shape()) + " vs " + ad::to_string(target.shape()));
  auto p = ad::clamp(prob, eps, Real(1) - eps);
  auto one_minus_p = ad::add_scalar(ad::scale(p, Real(-1)), Real(1));
  auto one_minus_t = ad::add_scalar(ad::scale(target, Real(-1)), Real(1));
  auto ll = ad::add(ad::mul(target, ad::log(p)), ad::mul(one_minus_t, ad::log(one_minus_p)));
  return ad::scale(ad::mean(ll), Real(-1));
}

namespace detail {

/// For each row of a ([n,3]) the index of the nearest row of b and the squared
/// distance. Ties go to the lower index.
template <typename Real>
void nearest_rows(const Real* a, std::size_t n, const Real* b, std::size_t m, std::vector<std::size_t>& idx,
                  std::vector<Real>& dist) {
  idx.assign(n, 0);
  dist.assign(n, std::numeric_limits<Real>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const Real x = a[3 * i], y = a[3 * i + 1], z = a[3 * i + 2];
    Real best = std::numeric_limits<Real>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const Real dx = x - b[3 * j], dy = y - b[3 * j + 1], dz = z - b[3 * j + 2];
      const Real d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    idx[i] = arg;
    dist[i] = best;
  }
}

}  // namespace detail

/// Chamfer distance between pred [n_p,3] and gt [n_gt,3]:
///   mean_{p in gt} min_q |p-q|^2 + mean_{q in pred} min_p |p-q|^2.
/// Single fused node; gradients flow to both inputs through the nearest
/// neighbour assignments.
template <typename Real>
Tensor<Real> chamfer_distance(const Tensor<Real>& pred, const Tensor<Real>& gt) {
  if (pred.rank() != 2 || gt.rank() != 2 || pred.dim(1) != 3 || gt.dim(1) != 3)
    throw ad::ShapeError("chamfer_distance: expected [n,3] point sets, got " + ad::to_string(pred.shape()) + " and " +
                         ad::to_string(gt.shape()));
  const std::size_t np = pred.dim(0), ng = gt.dim(0);
  if (np == 0 || ng == 0) throw std::invalid_argument("chamfer_distance: empty point set");
  std::vector<std::size_t> nn_gt, nn_pred;  // gt -> pred, pred -> gt
  std::vector<Real> d_gt, d_pred;
  detail::nearest_rows(gt.raw(), ng, pred.raw(), np, nn_gt, d_gt);
  detail::nearest_rows(pred.raw(), np, gt.raw(), ng, nn_pred, d_pred);
  Real a = 0, b = 0;
  for (Real d : d_gt) a += d;
  for (Real d : d_pred) b += d;
  const Real value = a / Real(ng) + b / Real(np);
  return ad::make_result<Real>(Shape{1}, std::vector<Real>{value}, "chamfer", {pred, gt},
                               [nn_gt = std::move(nn_gt), nn_pred = std::move(nn_pred), np, ng]() mutable {
                                 return [nn_gt = std::move(nn_gt), nn_pred = std::move(nn_pred), np,
                                         ng](const ad::Node<Real>& self) {
                                   auto& P = *self.inputs[0];
                                   auto& G = *self.inputs[1];
                                   const Real g = self.grad[0];
                                   if (P.requires_grad) P.ensure_grad();
                                   if (G.requires_grad) G.ensure_grad();
                                   auto pair = [&](std::size_t p, std::size_t q, Real w) {
                                     // d/dp |p - q|^2 = 2 (p - q)
                                     for (int k = 0; k < 3; ++k) {
                                       const Real diff = P.value[3 * p + k] - G.value[3 * q + k];
                                       if (P.requires_grad) P.grad[3 * p + k] += 2 * w * diff;
                                       if (G.requires_grad) G.grad[3 * q + k] -= 2 * w * diff;
                                     }
                                   };
                                   for (std::size_t j = 0; j < ng; ++j) pair(nn_gt[j], j, g / Real(ng));
                                   for (std::size_t i = 0; i < np; ++i) pair(i, nn_pred[i], g / Real(np));
                                 };
                               });
}

/// Same quantity assembled from generic ops (pairwise distances and min
/// reductions). Used as an independent route in tests.
template <typename Real>
Tensor<Real> chamfer_distance_composite(const Tensor<Real>& pred, const Tensor<Real>& gt) {
  if (pred.dim(0) == 0 || gt.dim(0) == 0) throw std::invalid_argument("chamfer_distance: empty point set");
  auto d = ad::pairwise_sq_distances(pred, gt);  // [n_p, n_gt]
  return ad::add(ad::mean(ad::min_reduce(d, 0)), ad::mean(ad::min_reduce(d, 1)));
}

/// Batched chamfer: pred [N, n_p, 3] against one gt set per item; mean over N.
template <typename Real>
Tensor<Real> chamfer_loss(const Tensor<Real>& pred, const std::vector<Tensor<Real>>& gt) {
  if (pred.rank() != 3 || pred.dim(2) != 3 || gt.size() != pred.dim(0))
    throw ad::ShapeError("chamfer_loss: prediction " + ad::to_string(pred.shape()) + " with " +
                         std::to_string(gt.size()) + " target sets");
  const std::size_t N = pred.dim(0), np = pred.dim(1);
  std::vector<Tensor<Real>> terms;
  for (std::size_t n = 0; n < N; ++n)
    terms.push_back(chamfer_distance(ad::reshape(ad::slice(pred, 0, n, 1), {np, 3}), gt[n]));
  return ad::mean(ad::concat(terms, 0));
}

}  // namespace ssr::metrics
