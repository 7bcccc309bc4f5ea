#pragma once

#include <cmath>
#include <stdexcept>

#include "ssr/scene/camera.hpp"

namespace ssr::scene {

/// Per-pixel pinhole disparity. Background (+inf depth) maps to 0; use
/// background_mask to recover the flag.
inline DisparityMap depth_to_disparity(const DepthMap& depth, const StereoCamera& cam) {
  DisparityMap out(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const float z = depth.data[i];
    if (!(z > 0))
      throw std::domain_error("depth_to_disparity: non-positive depth " + std::to_string(z) + " at pixel (" +
                              std::to_string(i % depth.width) + ", " + std::to_string(i / depth.width) + ")");
    out.data[i] = disparity_from_depth(z, cam);
  }
  return out;
}

inline Mask background_mask(const DepthMap& depth) {
  Mask m(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i) m.data[i] = std::isinf(depth.data[i]) ? 1 : 0;
  return m;
}

struct OcclusionMasks {
  Mask left, right;
};

/// Left-right consistency check with a 1 px threshold. A left pixel is
/// occluded when its match x - d falls outside the image or the right map
/// disagrees there by more than 1 px; the right map is checked the same way
/// looking at x + d.
inline OcclusionMasks compute_occlusion(const DisparityMap& disp_l, const DisparityMap& disp_r,
                                        float threshold = 1.0f) {
  if (!disp_l.same_size(disp_r)) throw std::invalid_argument("compute_occlusion: maps differ in size");
  const long W = long(disp_l.width);
  OcclusionMasks out{Mask(disp_l.width, disp_l.height), Mask(disp_l.width, disp_l.height)};
  for (std::size_t y = 0; y < disp_l.height; ++y)
    for (long x = 0; x < W; ++x) {
      const float dl = disp_l.at(std::size_t(x), y);
      const double xl = double(x) - dl;
      const long ml = long(std::lround(xl));
      out.left.at(std::size_t(x), y) =
          (xl < 0 || xl >= double(W) || ml < 0 || ml >= W || std::abs(dl - disp_r.at(std::size_t(ml), y)) > threshold);

      const float dr = disp_r.at(std::size_t(x), y);
      const double xr = double(x) + dr;
      const long mr = long(std::lround(xr));
      out.right.at(std::size_t(x), y) =
          (xr < 0 || xr >= double(W) || mr < 0 || mr >= W || std::abs(dr - disp_l.at(std::size_t(mr), y)) > threshold);
    }
  return out;
}

}  // namespace ssr::scene
