#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ssr/autodiff/ops.hpp"
#include "ssr/random.hpp"

namespace ssr::ad {

/// One differentiable input of a gradient check. Values are drawn uniformly
/// from [lo, hi]; with `min_abs` > 0 they are pushed away from zero so kinks
/// (relu) stay outside the finite-difference stencil.
struct InputSpec {
  Shape shape;
  double lo = -1.0;
  double hi = 1.0;
  double min_abs = 0.0;
};

using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Max over all input elements of |analytic - central difference| /
/// max(|analytic|, |cd|, 1e-8). Non-scalar outputs are contracted with fixed
/// random weights first.
inline double check_gradients(const GradFn& fn, const std::vector<InputSpec>& specs,
                              std::uint64_t seed, double step = 1e-5) {
  Rng rng(seed);
  std::vector<Tensor<double>> inputs;
  for (const auto& spec : specs) {
    Tensor<double> t(spec.shape);
    for (auto& v : t.data()) {
      v = rng.uniform(spec.lo, spec.hi);
      if (spec.min_abs > 0 && std::abs(v) < spec.min_abs) v = v < 0 ? v - spec.min_abs : v + spec.min_abs;
    }
    t.set_requires_grad(true);
    inputs.push_back(t);
  }

  Tensor<double> probe = [&] {
    NoGradGuard guard;
    return fn(inputs);
  }();
  Tensor<double> weights(probe.shape());
  Rng wrng(mix_seed(seed, 1));
  for (auto& v : weights.data()) v = wrng.uniform(-1.0, 1.0);

  auto objective = [&](const std::vector<Tensor<double>>& in) {
    return sum(mul(fn(in), weights));
  };

  backward(objective(inputs));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (double g : analytic)
      if (!std::isfinite(g)) throw NumericError("non-finite analytic gradient");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      NoGradGuard guard;
      const double original = t.data()[i];
      t.data()[i] = original + step;
      const double plus = objective(inputs).item();
      t.data()[i] = original - step;
      const double minus = objective(inputs).item();
      t.data()[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      if (!std::isfinite(numeric)) throw NumericError("non-finite finite-difference gradient");
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ssr::ad
