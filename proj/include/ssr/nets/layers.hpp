#pragma once

#include <string>

#include "ssr/autodiff/batchnorm.hpp"
#include "ssr/autodiff/conv.hpp"
#include "ssr/autodiff/parameters.hpp"

namespace ssr::nets {

using ad::Mode;
using ad::ParameterRegistry;
using ad::Shape;
using ad::Tensor;

/// Convolution of either dimensionality, plain or transposed. Layers that
/// feed a batch norm are built without bias (it would receive no gradient).
template <typename Real>
struct Conv {
  Tensor<Real> w, b;
  int dims = 2;
  bool transposed = false;
  std::size_t stride = 1, padding = 0;

  struct Spec {
    int dims = 2;
    bool transposed = false;
    std::size_t in = 1, out = 1, kernel = 3, stride = 1, padding = 0;
    bool bias = true;
  };

  Conv() = default;
  Conv(ParameterRegistry<Real>& reg, const std::string& name, const Spec& s, Rng& rng)
      : dims(s.dims), transposed(s.transposed), stride(s.stride), padding(s.padding) {
    Shape shape = transposed ? Shape{s.in, s.out} : Shape{s.out, s.in};
    std::size_t taps = 1;
    for (int d = 0; d < dims; ++d) {
      shape.push_back(s.kernel);
      taps *= s.kernel;
    }
    // A transposed conv output sees in * taps / stride^dims input terms.
    std::size_t fan_in = s.in * taps;
    if (transposed)
      for (int d = 0; d < dims; ++d) fan_in = std::max<std::size_t>(1, fan_in / s.stride);
    w = reg.add(name + ".w", ad::he_uniform<Real>(shape, fan_in, rng));
    b = s.bias ? reg.add(name + ".b", Tensor<Real>({s.out})) : Tensor<Real>({s.out});
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    if (dims == 2)
      return transposed ? ad::conv_transpose2d(x, w, b, stride, padding) : ad::conv2d(x, w, b, stride, padding);
    return transposed ? ad::conv_transpose3d(x, w, b, stride, padding) : ad::conv3d(x, w, b, stride, padding);
  }
};

template <typename Real>
struct BatchNorm {
  Tensor<Real> gamma, beta;
  std::shared_ptr<ad::RunningStats<Real>> stats;

  BatchNorm() = default;
  BatchNorm(ParameterRegistry<Real>& reg, const std::string& name, std::size_t channels)
      : gamma(reg.add(name + ".gamma", Tensor<Real>({channels}, Real(1)))),
        beta(reg.add(name + ".beta", Tensor<Real>({channels}))),
        stats(reg.add_buffer(name, channels)) {}

  Tensor<Real> operator()(const Tensor<Real>& x, Mode mode) const {
    return ad::batch_norm(x, gamma, beta, *stats, mode);
  }
};

template <typename Real>
struct Linear {
  Tensor<Real> w, b;

  Linear() = default;
  Linear(ParameterRegistry<Real>& reg, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : w(reg.add(name + ".w", ad::he_uniform<Real>({out, in}, in, rng))),
        b(reg.add(name + ".b", Tensor<Real>({out}))) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const { return ad::linear(x, w, b); }
  std::size_t in_features() const { return w.dim(1); }
};

/// conv -> BN -> ReLU, the common unit of the encoders and CorrNet.
template <typename Real>
struct ConvBnRelu {
  Conv<Real> conv;
  BatchNorm<Real> bn;

  ConvBnRelu() = default;
  ConvBnRelu(ParameterRegistry<Real>& reg, const std::string& name, typename Conv<Real>::Spec spec, Rng& rng) {
    spec.bias = false;
    conv = Conv<Real>(reg, name + ".conv", spec, rng);
    bn = BatchNorm<Real>(reg, name + ".bn", spec.out);
  }

  Tensor<Real> operator()(const Tensor<Real>& x, Mode mode) const { return ad::relu(bn(conv(x), mode)); }
};

/// conv3x3(stride)-BN-ReLU, conv3x3-BN, plus a skip path, then ReLU. The skip
/// is a strided 1x1 conv whenever the shape changes.
template <typename Real>
struct ResidualBlock {
  Conv<Real> conv1, conv2, proj;
  BatchNorm<Real> bn1, bn2;
  bool has_proj = false;

  ResidualBlock() = default;
  ResidualBlock(ParameterRegistry<Real>& reg, const std::string& name, std::size_t in, std::size_t out,
                std::size_t stride, Rng& rng)
      : has_proj(in != out || stride != 1) {
    conv1 = Conv<Real>(reg, name + ".conv1", {2, false, in, out, 3, stride, 1, false}, rng);
    bn1 = BatchNorm<Real>(reg, name + ".bn1", out);
    conv2 = Conv<Real>(reg, name + ".conv2", {2, false, out, out, 3, 1, 1, false}, rng);
    bn2 = BatchNorm<Real>(reg, name + ".bn2", out);
    if (has_proj) proj = Conv<Real>(reg, name + ".proj", {2, false, in, out, 1, stride, 0, true}, rng);
  }

  Tensor<Real> operator()(const Tensor<Real>& x, Mode mode) const {
    auto h = ad::relu(bn1(conv1(x), mode));
    h = bn2(conv2(h), mode);
    return ad::relu(ad::add(h, has_proj ? proj(x) : x));
  }
};

/// Squeeze 1x1 + ReLU, then parallel 1x1 and 3x3 expands (+ReLU), concatenated.
template <typename Real>
struct FireModule {
  Conv<Real> squeeze, expand1, expand3;

  FireModule() = default;
  FireModule(ParameterRegistry<Real>& reg, const std::string& name, std::size_t in, std::size_t s, std::size_t e1,
             std::size_t e3, Rng& rng) {
    if (s >= e1 + e3) throw std::invalid_argument(name + ": squeeze width must be below the expand width");
    squeeze = Conv<Real>(reg, name + ".squeeze", {2, false, in, s, 1, 1, 0, true}, rng);
    expand1 = Conv<Real>(reg, name + ".expand1", {2, false, s, e1, 1, 1, 0, true}, rng);
    expand3 = Conv<Real>(reg, name + ".expand3", {2, false, s, e3, 3, 1, 1, true}, rng);
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto s = ad::relu(squeeze(x));
    return ad::concat<Real>({ad::relu(expand1(s)), ad::relu(expand3(s))}, 1);
  }
};

}  // namespace ssr::nets
