#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "ssr/autodiff/tensor.hpp"

namespace ssr::ad {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMatrix<Real>>;

namespace detail {

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
}

template <typename Real>
void accumulate(Node<Real>& target, std::size_t i, Real g) {
  target.grad[i] += g;
}

// Elementwise unary op with derivative computed from (input, output).
template <typename Real, typename Fwd, typename Deriv>
Tensor<Real> unary(const Tensor<Real>& x, const char* name, Fwd f, Deriv df) {
  std::vector<Real> out(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
  auto result = make_result<Real>(x.shape(), std::move(out), name, {x}, [&] {
    return [df](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      if (!in.requires_grad) return;
      in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        in.grad[i] += self.grad[i] * df(in.value[i], self.value[i]);
    };
  });
  return result;
}

}  // namespace detail

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<Real>(a.shape(), std::move(out), "add", {a, b}, [] {
    return [](const Node<Real>& self) {
      for (const auto& in : self.inputs) {
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
      }
    };
  });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<Real>(a.shape(), std::move(out), "sub", {a, b}, [] {
    return [](const Node<Real>& self) {
      for (std::size_t k = 0; k < 2; ++k) {
        auto& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        in.ensure_grad();
        const Real sign = k == 0 ? Real(1) : Real(-1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += sign * self.grad[i];
      }
    };
  });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<Real>(a.shape(), std::move(out), "mul", {a, b}, [] {
    return [](const Node<Real>& self) {
      auto& x = *self.inputs[0];
      auto& y = *self.inputs[1];
      if (x.requires_grad) {
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.value[i];
      }
      if (y.requires_grad) {
        y.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.value[i];
      }
    };
  });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  return detail::unary(
      x, "scale", [factor](Real v) { return v * factor; },
      [factor](Real, Real) { return factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real offset) {
  return detail::unary(
      x, "add_scalar", [offset](Real v) { return v + offset; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> square(const Tensor<Real>& x) {
  return detail::unary(
      x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return detail::unary(
      x, "relu", [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return detail::unary(
      x, "sigmoid",
      [](Real v) {
        if (v >= Real(0)) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

/// Natural log; input must be strictly positive (clamp first).
template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (!(x[i] > Real(0)))
      throw NumericError("log of non-positive value at element " + std::to_string(i));
  return detail::unary(
      x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

/// Gradient passes only where the input lies inside [lo, hi].
template <typename Real>
Tensor<Real> clamp(const Tensor<Real>& x, Real lo, Real hi) {
  return detail::unary(
      x, "clamp", [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_result<Real>(Shape{1}, {total}, "sum", {x}, [] {
    return [](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      in.ensure_grad();
      for (auto& g : in.grad) g += self.grad[0];
    };
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  const Real n = static_cast<Real>(x.numel());
  return make_result<Real>(Shape{1}, {total / n}, "mean", {x}, [n] {
    return [n](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      in.ensure_grad();
      const Real g = self.grad[0] / n;
      for (auto& v : in.grad) v += g;
    };
  });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result<Real>(std::move(shape), std::move(out), "reshape", {x}, [] {
    return [](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    };
  });
}

/// [N, ...] -> [N, prod(...)]
template <typename Real>
Tensor<Real> flatten(const Tensor<Real>& x) {
  return reshape(x, Shape{x.dim(0), x.numel() / x.dim(0)});
}

namespace detail {
// Views a tensor as [outer, extent(dim), inner].
inline void split_at(const Shape& s, std::size_t dim, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < dim; ++i) outer *= s[i];
  for (std::size_t i = dim + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t dim) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (dim >= shape.size()) throw ShapeError("concat: dim out of range for " + to_string(shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == shape.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == dim) || s[i] == shape[i];
    if (!ok)
      throw ShapeError("concat along dim " + std::to_string(dim) + ": " + to_string(shape) +
                       " vs " + to_string(s));
    total += s[dim];
  }
  shape[dim] = total;
  std::size_t outer = 0, inner = 0;
  detail::split_at(shape, dim, outer, inner);
  std::vector<Real> out(numel_of(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.dim(dim) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.raw() + o * len, len, out.data() + (o * total + off) * inner);
    off += p.dim(dim);
  }
  return make_result<Real>(shape, std::move(out), "concat", parts, [&] {
    std::vector<std::size_t> extents;
    for (const auto& p : parts) extents.push_back(p.dim(dim));
    return [offsets, extents, outer, inner, total](const Node<Real>& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        auto& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        in.ensure_grad();
        const std::size_t len = extents[k] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const Real* src = self.grad.data() + (o * total + offsets[k]) * inner;
          Real* dst = in.grad.data() + o * len;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

/// Contiguous range [start, start + length) along `dim`.
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t dim, std::size_t start, std::size_t length) {
  Shape shape = x.shape();
  if (dim >= shape.size() || start + length > shape[dim] || length == 0)
    throw ShapeError("slice: range out of bounds for " + to_string(shape));
  const std::size_t full = shape[dim];
  shape[dim] = length;
  std::size_t outer = 0, inner = 0;
  detail::split_at(shape, dim, outer, inner);
  std::vector<Real> out(numel_of(shape));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.raw() + (o * full + start) * inner, length * inner,
                out.data() + o * length * inner);
  return make_result<Real>(shape, std::move(out), "slice", {x}, [=] {
    return [=](const Node<Real>& self) {
      auto& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const Real* src = self.grad.data() + o * length * inner;
        Real* dst = in.grad.data() + (o * full + start) * inner;
        for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
      }
    };
  });
}

/// Minimum along `dim` (dim removed). The gradient goes to the argmin only;
/// ties resolve to the lowest index.
template <typename Real>
Tensor<Real> min_reduce(const Tensor<Real>& x, std::size_t dim) {
  const Shape& in_shape = x.shape();
  if (dim >= in_shape.size()) throw ShapeError("min_reduce: dim out of range");
  std::size_t outer = 0, inner = 0;
  detail::split_at(in_shape, dim, outer, inner);
  const std::size_t extent = in_shape[dim];
  Shape shape;
  for (std::size_t i = 0; i < in_shape.size(); ++i)
    if (i != dim) shape.push_back(in_shape[i]);
  if (shape.empty()) shape.push_back(1);
  std::vector<Real> out(outer * inner);
  std::vector<std::size_t> arg(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const Real* base = x.raw() + o * extent * inner + i;
      std::size_t best = 0;
      for (std::size_t k = 1; k < extent; ++k)
        if (base[k * inner] < base[best * inner]) best = k;
      out[o * inner + i] = base[best * inner];
      arg[o * inner + i] = (o * extent + best) * inner + i;
    }
  return make_result<Real>(std::move(shape), std::move(out), "min_reduce", {x},
                           [arg = std::move(arg)]() mutable {
                             return [arg = std::move(arg)](const Node<Real>& self) {
                               auto& in = *self.inputs[0];
                               in.ensure_grad();
                               for (std::size_t j = 0; j < arg.size(); ++j)
                                 in.grad[arg[j]] += self.grad[j];
                             };
                           });
}

/// Fully connected: x[N, in] * w[out, in]^T + b[out].
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(1) ||
      b.dim(0) != w.dim(0))
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(w.shape()) + " and bias " + to_string(b.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  std::vector<Real> out(n * out_f);
  MatMap<Real> y(out.data(), n, out_f);
  ConstMatMap<Real> xm(x.raw(), n, in), wm(w.raw(), out_f, in);
  y.noalias() = xm * wm.transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < out_f; ++c) y(r, c) += b[c];
  return make_result<Real>(Shape{n, out_f}, std::move(out), "linear", {x, w, b}, [=] {
    return [=](const Node<Real>& self) {
      auto& xn = *self.inputs[0];
      auto& wn = *self.inputs[1];
      auto& bn = *self.inputs[2];
      ConstMatMap<Real> gy(self.grad.data(), n, out_f);
      if (xn.requires_grad) {
        xn.ensure_grad();
        MatMap<Real>(xn.grad.data(), n, in).noalias() +=
            gy * ConstMatMap<Real>(wn.value.data(), out_f, in);
      }
      if (wn.requires_grad) {
        wn.ensure_grad();
        MatMap<Real>(wn.grad.data(), out_f, in).noalias() +=
            gy.transpose() * ConstMatMap<Real>(xn.value.data(), n, in);
      }
      if (bn.requires_grad) {
        bn.ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < out_f; ++c) bn.grad[c] += gy(r, c);
      }
    };
  });
}

/// Squared Euclidean distances between rows of a[n, k] and b[m, k] -> [n, m].
template <typename Real>
Tensor<Real> pairwise_sq_distances(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("pairwise_sq_distances: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const std::size_t n = a.dim(0), m = b.dim(0), k = a.dim(1);
  std::vector<Real> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Real d = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const Real diff = a[i * k + c] - b[j * k + c];
        d += diff * diff;
      }
      out[i * m + j] = d;
    }
  return make_result<Real>(Shape{n, m}, std::move(out), "pairwise_sq_distances", {a, b}, [=] {
    return [=](const Node<Real>& self) {
      auto& an = *self.inputs[0];
      auto& bn = *self.inputs[1];
      if (an.requires_grad) an.ensure_grad();
      if (bn.requires_grad) bn.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const Real g = self.grad[i * m + j];
          if (g == Real(0)) continue;
          for (std::size_t c = 0; c < k; ++c) {
            const Real diff = Real(2) * (an.value[i * k + c] - bn.value[j * k + c]) * g;
            if (an.requires_grad) an.grad[i * k + c] += diff;
            if (bn.requires_grad) bn.grad[j * k + c] -= diff;
          }
        }
    };
  });
}

}  // namespace ssr::ad
