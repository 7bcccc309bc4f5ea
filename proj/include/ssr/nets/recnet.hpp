#pragma once

#include "ssr/nets/config.hpp"
#include "ssr/nets/cost_volume.hpp"
#include "ssr/nets/layers.hpp"

namespace ssr::nets {

inline std::size_t halve_up(std::size_t n) { return (n + 1) / 2; }

/// Shared view encoder: four stride-2 residual blocks (c0, 2c0, 4c0, 8c0),
/// a 1x1 reduction to c0 channels and a linear map to F. Input is RGB plus
/// the view's disparity divided by D_max, or RGB alone when built without
/// disparity. Also returns the activation after the third block (1/8 scale).
template <typename Real>
struct RecNetEncoder {
  struct Output {
    Tensor<Real> feature;  // [N, F]
    Tensor<Real> tap3;     // [N, 4c0, H/8, W/8]
  };

  ResidualBlock<Real> rb1, rb2, rb3, rb4;
  Conv<Real> reduce;
  Linear<Real> fc;
  std::size_t in_channels = 4;
  double max_disparity = 1;

  RecNetEncoder() = default;
  RecNetEncoder(ParameterRegistry<Real>& reg, const std::string& p, const ScaleConfig& cfg, bool with_disparity,
                Rng& rng)
      : in_channels(with_disparity ? 4 : 3), max_disparity(cfg.max_disparity) {
    const std::size_t c = cfg.c0;
    rb1 = ResidualBlock<Real>(reg, p + ".rb1", in_channels, c, 2, rng);
    rb2 = ResidualBlock<Real>(reg, p + ".rb2", c, 2 * c, 2, rng);
    rb3 = ResidualBlock<Real>(reg, p + ".rb3", 2 * c, 4 * c, 2, rng);
    rb4 = ResidualBlock<Real>(reg, p + ".rb4", 4 * c, 8 * c, 2, rng);
    reduce = Conv<Real>(reg, p + ".reduce", {2, false, 8 * c, c, 1, 1, 0, true}, rng);
    const std::size_t h = halve_up(halve_up(halve_up(halve_up(cfg.height))));
    const std::size_t w = halve_up(halve_up(halve_up(halve_up(cfg.width))));
    fc = Linear<Real>(reg, p + ".fc", c * h * w, cfg.feature_len, rng);
  }

  /// image [N,3,H,W]; disparity [N,1,H,W] (ignored without disparity input).
  Output operator()(const Tensor<Real>& image, const Tensor<Real>* disparity, Mode mode) const {
    Tensor<Real> x = image;
    if (in_channels == 4) {
      if (!disparity) throw std::invalid_argument("recnet encoder: disparity input required");
      if (disparity->rank() != 4 || disparity->dim(0) != image.dim(0) || disparity->dim(1) != 1 ||
          disparity->dim(2) != image.dim(2) || disparity->dim(3) != image.dim(3))
        throw ad::ShapeError("recnet encoder: disparity " + ad::to_string(disparity->shape()) +
                             " does not match image " + ad::to_string(image.shape()));
      x = ad::concat<Real>({image, ad::scale(*disparity, Real(1.0 / max_disparity))}, 1);
    }
    auto h = rb1(ad::add_scalar(x, Real(-0.5)), mode);
    h = rb2(h, mode);
    auto tap3 = rb3(h, mode);
    h = ad::relu(reduce(rb4(tap3, mode)));
    auto flat = ad::reshape(h, {h.dim(0), h.numel() / h.dim(0)});
    if (flat.dim(1) != fc.in_features())
      throw ad::ShapeError("recnet encoder: input size " + ad::to_string(image.shape()) +
                           " does not match the configured input size");
    return {fc(flat), tap3};
  }
};

/// Nine conv3d+BN+ReLU stages over the cost volume (first with a 1^3
/// kernel), a 1^3 conv to one channel, the disparity axis folded into
/// channels, a 1x1 conv to one channel, then a linear map to G.
template <typename Real>
struct CorrNet {
  std::vector<ConvBnRelu<Real>> stages;
  ConvBnRelu<Real> to_one;
  ConvBnRelu<Real> fold;
  Linear<Real> fc;

  CorrNet() = default;
  CorrNet(ParameterRegistry<Real>& reg, const std::string& p, const ScaleConfig& cfg, Rng& rng) {
    const std::size_t in = 2 * 4 * cfg.c0, k = cfg.corr_channels;
    for (int i = 0; i < 9; ++i) {
      typename Conv<Real>::Spec s{3, false, i == 0 ? in : k, k, std::size_t(i == 0 ? 1 : 3), 1,
                                  std::size_t(i == 0 ? 0 : 1)};
      stages.emplace_back(reg, p + ".c" + std::to_string(i + 1), s, rng);
    }
    to_one = ConvBnRelu<Real>(reg, p + ".to_one", {3, false, k, 1, 1, 1, 0}, rng);
    fold = ConvBnRelu<Real>(reg, p + ".fold", {2, false, cfg.cost_depth(), 1, 1, 1, 0}, rng);
    const std::size_t h = halve_up(halve_up(halve_up(cfg.height)));
    const std::size_t w = halve_up(halve_up(halve_up(cfg.width)));
    fc = Linear<Real>(reg, p + ".fc", h * w, cfg.corr_len, rng);
  }

  /// cost volume [N, 2C, D, Hf, Wf] -> [N, G].
  Tensor<Real> operator()(const Tensor<Real>& cv, Mode mode) const {
    auto h = cv;
    for (const auto& s : stages) h = s(h, mode);
    h = to_one(h, mode);
    h = ad::reshape(h, {h.dim(0), h.dim(2), h.dim(3), h.dim(4)});
    h = fold(h, mode);
    return fc(ad::reshape(h, {h.dim(0), h.numel() / h.dim(0)}));
  }
};

/// Latent [N, L] reshaped to an [N, L/8, 2, 2, 2] seed; log2(R/2) stride-2
/// transposed convs, residual stride-1 refinements spread from the coarsest
/// level so that the total stays nine transposed convs, and a final
/// transposed 3^3 conv to one channel with a sigmoid. Output [N, R, R, R]
/// indexed [n][z][y][x].
template <typename Real>
struct VolumeDecoder {
  struct Stage {
    Conv<Real> conv;
    BatchNorm<Real> bn;
    bool residual = false;
  };
  std::vector<Stage> stages;
  Conv<Real> head;
  std::size_t seed_channels = 0, resolution = 0;

  VolumeDecoder() = default;
  VolumeDecoder(ParameterRegistry<Real>& reg, const std::string& p, const ScaleConfig& cfg, std::size_t latent,
                Rng& rng)
      : seed_channels(latent / 8), resolution(cfg.volume_res) {
    const std::size_t ups = cfg.volume_upsamples(), refines = 8 - ups;
    auto width_at = [&](std::size_t r) {
      return std::clamp<std::size_t>(cfg.c0 * cfg.volume_res / r, cfg.c0, 8 * cfg.c0);
    };
    std::vector<std::size_t> refine_count(ups, 0);
    for (std::size_t i = 0; i < refines; ++i) ++refine_count[i % ups];
    std::size_t ch = seed_channels, r = 2;
    int idx = 0;
    for (std::size_t level = 0; level < ups; ++level) {
      r *= 2;
      const std::size_t out = width_at(r);
      const auto name = p + ".t" + std::to_string(++idx);
      stages.push_back({Conv<Real>(reg, name, {3, true, ch, out, 4, 2, 1, false}, rng), BatchNorm<Real>(reg, name + ".bn", out), false});
      ch = out;
      for (std::size_t k = 0; k < refine_count[level]; ++k) {
        const auto rname = p + ".t" + std::to_string(++idx);
        stages.push_back({Conv<Real>(reg, rname, {3, true, ch, ch, 3, 1, 1, false}, rng),
                          BatchNorm<Real>(reg, rname + ".bn", ch), true});
      }
    }
    head = Conv<Real>(reg, p + ".t" + std::to_string(++idx), {3, true, ch, 1, 3, 1, 1, true}, rng);
  }

  Tensor<Real> operator()(const Tensor<Real>& z, Mode mode) const {
    if (z.rank() != 2 || z.dim(1) != seed_channels * 8)
      throw ad::ShapeError("volume decoder: latent " + ad::to_string(z.shape()) + ", expected [N, " +
                           std::to_string(seed_channels * 8) + "]");
    auto h = ad::reshape(z, {z.dim(0), seed_channels, 2, 2, 2});
    for (const auto& s : stages) {
      auto y = s.bn(s.conv(h), mode);
      h = s.residual ? ad::relu(ad::add(h, y)) : ad::relu(y);
    }
    auto out = ad::sigmoid(head(h));
    return ad::reshape(out, {z.dim(0), resolution, resolution, resolution});
  }
};

/// Latent [N, L] reshaped to an [N, L/16, 4, 4] seed map, eight Fire modules
/// and a linear layer to n_p x 3 coordinates. Output [N, n_p, 3].
template <typename Real>
struct PointDecoder {
  std::vector<FireModule<Real>> fires;
  Linear<Real> fc;
  std::size_t seed_channels = 0, n_points = 0;

  PointDecoder() = default;
  PointDecoder(ParameterRegistry<Real>& reg, const std::string& p, const ScaleConfig& cfg, std::size_t latent,
               Rng& rng)
      : seed_channels(latent / 16), n_points(cfg.n_points) {
    const std::size_t s = 2 * cfg.c0, e = 4 * cfg.c0;
    std::size_t ch = seed_channels;
    for (int i = 0; i < 8; ++i) {
      fires.emplace_back(reg, p + ".fire" + std::to_string(i + 1), ch, s, e, e, rng);
      ch = 2 * e;
    }
    fc = Linear<Real>(reg, p + ".fc", ch * 16, 3 * cfg.n_points, rng);
  }

  Tensor<Real> operator()(const Tensor<Real>& z) const {
    if (z.rank() != 2 || z.dim(1) != seed_channels * 16)
      throw ad::ShapeError("point decoder: latent " + ad::to_string(z.shape()) + ", expected [N, " +
                           std::to_string(seed_channels * 16) + "]");
    auto h = ad::reshape(z, {z.dim(0), seed_channels, 4, 4});
    for (const auto& f : fires) h = f(h);
    auto out = fc(ad::reshape(h, {z.dim(0), h.numel() / z.dim(0)}));
    return ad::reshape(out, {z.dim(0), n_points, 3});
  }
};

}  // namespace ssr::nets
