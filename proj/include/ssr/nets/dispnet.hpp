#pragma once

#include "ssr/autodiff/spatial.hpp"
#include "ssr/nets/config.hpp"
#include "ssr/nets/layers.hpp"

namespace ssr::nets {

/// Bidirectional disparity network. The two views enter as one 6-channel
/// image; a U-Net with three stride-2 stages each way returns left and right
/// disparity maps (pixels, >= 0) at input resolution. Inputs whose size is
/// not a multiple of 8 are reflect-padded and the output cropped back.
template <typename Real>
struct DispNetB {
  Conv<Real> enc1, enc2, enc3, enc4, enc4b;
  Conv<Real> up3, dec3, up2, dec2, up1, dec1, head;

  DispNetB() = default;
  DispNetB(ParameterRegistry<Real>& reg, const std::string& p, const ScaleConfig& cfg, Rng& rng) {
    const std::size_t c = cfg.c0;
    using S = typename Conv<Real>::Spec;
    enc1 = Conv<Real>(reg, p + ".enc1", S{2, false, 6, c, 3, 1, 1}, rng);
    enc2 = Conv<Real>(reg, p + ".enc2", S{2, false, c, 2 * c, 3, 2, 1}, rng);
    enc3 = Conv<Real>(reg, p + ".enc3", S{2, false, 2 * c, 4 * c, 3, 2, 1}, rng);
    enc4 = Conv<Real>(reg, p + ".enc4", S{2, false, 4 * c, 8 * c, 3, 2, 1}, rng);
    enc4b = Conv<Real>(reg, p + ".enc4b", S{2, false, 8 * c, 8 * c, 3, 1, 1}, rng);
    up3 = Conv<Real>(reg, p + ".up3", S{2, true, 8 * c, 4 * c, 4, 2, 1}, rng);
    dec3 = Conv<Real>(reg, p + ".dec3", S{2, false, 8 * c, 4 * c, 3, 1, 1}, rng);
    up2 = Conv<Real>(reg, p + ".up2", S{2, true, 4 * c, 2 * c, 4, 2, 1}, rng);
    dec2 = Conv<Real>(reg, p + ".dec2", S{2, false, 4 * c, 2 * c, 3, 1, 1}, rng);
    up1 = Conv<Real>(reg, p + ".up1", S{2, true, 2 * c, c, 4, 2, 1}, rng);
    dec1 = Conv<Real>(reg, p + ".dec1", S{2, false, 2 * c, c, 3, 1, 1}, rng);
    head = Conv<Real>(reg, p + ".head", S{2, false, c, 2, 3, 1, 1}, rng);
    // Start the output ReLU in its active region.
    for (auto& v : head.b.data()) v = Real(1);
  }

  /// left, right [N,3,H,W] in [0,1] -> [N,2,H,W] (channel 0 left view).
  Tensor<Real> operator()(const Tensor<Real>& left, const Tensor<Real>& right) const {
    if (left.shape() != right.shape() || left.rank() != 4 || left.dim(1) != 3)
      throw ad::ShapeError("dispnetb: expected two [N,3,H,W] images, got " + ad::to_string(left.shape()) + " and " +
                           ad::to_string(right.shape()));
    const std::size_t H = left.dim(2), W = left.dim(3);
    const std::size_t pad_h = (8 - H % 8) % 8, pad_w = (8 - W % 8) % 8;
    auto x = ad::add_scalar(ad::concat<Real>({left, right}, 1), Real(-0.5));
    if (pad_h || pad_w) x = ad::pad_reflect2d(x, pad_h, pad_w);
    using ad::relu;
    auto e1 = relu(enc1(x));
    auto e2 = relu(enc2(e1));
    auto e3 = relu(enc3(e2));
    auto e4 = relu(enc4b(relu(enc4(e3))));
    auto d3 = relu(dec3(ad::concat<Real>({relu(up3(e4)), e3}, 1)));
    auto d2 = relu(dec2(ad::concat<Real>({relu(up2(d3)), e2}, 1)));
    auto d1 = relu(dec1(ad::concat<Real>({relu(up1(d2)), e1}, 1)));
    auto out = relu(head(d1));
    if (pad_h || pad_w) out = ad::crop2d(out, H, W);
    return out;
  }
};

}  // namespace ssr::nets
