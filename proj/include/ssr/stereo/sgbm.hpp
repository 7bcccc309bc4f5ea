#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ssr/parallel.hpp"
#include "ssr/scene/geometry.hpp"

namespace ssr::stereo {

using scene::DisparityMap;
using scene::Map2;
using scene::Mask;
using scene::RgbImage;

using GrayImage = Map2<double>;

enum class CostKind { sad, census };

struct SgmParams {
  int block_radius = 2;  // 5x5 window
  int max_disparity = 48;
  double p1 = 2;   // census costs are Hamming distances in [0, 24]
  double p2 = 24;
  int paths = 8;   // 4 or 8
  double uniqueness = 0.05;  // best must beat every non-neighbouring cost by this fraction
  CostKind cost = CostKind::census;
  int threads = 1;

  void validate() const {
    if (!(p1 > 0 && p2 > p1)) throw std::invalid_argument("sgm: need P2 > P1 > 0");
    if (max_disparity < 1) throw std::invalid_argument("sgm: max disparity must be >= 1");
    if (paths != 4 && paths != 8) throw std::invalid_argument("sgm: paths must be 4 or 8");
    if (block_radius < 0 || block_radius > 3) throw std::invalid_argument("sgm: block radius must be in [0, 3]");
    if (uniqueness < 0) throw std::invalid_argument("sgm: uniqueness ratio must be >= 0");
  }
};

/// Per-pixel cost over disparities, stored [y][x][d].
struct CostVolume {
  std::size_t width = 0, height = 0, depth = 0;
  std::vector<double> data;

  CostVolume() = default;
  CostVolume(std::size_t w, std::size_t h, std::size_t d, double fill = 0)
      : width(w), height(h), depth(d), data(w * h * d, fill) {}
  double* at(std::size_t x, std::size_t y) { return data.data() + (y * width + x) * depth; }
  const double* at(std::size_t x, std::size_t y) const { return data.data() + (y * width + x) * depth; }
};

/// Luma scaled to [0, 255].
inline GrayImage to_gray(const RgbImage& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      g.at(x, y) = 255.0 * (0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2));
  return g;
}

namespace detail {

inline double clamped(const GrayImage& g, long x, long y) {
  x = std::clamp<long>(x, 0, long(g.width) - 1);
  y = std::clamp<long>(y, 0, long(g.height) - 1);
  return g.at(std::size_t(x), std::size_t(y));
}

/// Census bit string: one bit per window pixel darker than the centre.
inline std::vector<std::uint64_t> census(const GrayImage& g, int r) {
  std::vector<std::uint64_t> out(g.width * g.height, 0);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) {
      const double c = g.at(x, y);
      std::uint64_t bits = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (!dx && !dy) continue;
          bits = (bits << 1) | (clamped(g, long(x) + dx, long(y) + dy) < c ? 1u : 0u);
        }
      out[y * g.width + x] = bits;
    }
  return out;
}

inline double max_cost(const SgmParams& p) {
  const int n = (2 * p.block_radius + 1) * (2 * p.block_radius + 1);
  return p.cost == CostKind::census ? double(n - 1) : 255.0 * n;
}

}  // namespace detail

/// cost(y, x, d) compares the window at x in the left image with the window
/// at x - d in the right image (census Hamming distance or SAD). Shifts
/// that leave the image get the maximum cost. Windows clamp at borders.
inline CostVolume matching_cost(const GrayImage& left, const GrayImage& right, const SgmParams& p) {
  p.validate();
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("matching_cost: image sizes differ");
  const std::size_t W = left.width, H = left.height, D = std::size_t(p.max_disparity) + 1;
  if (std::size_t(p.max_disparity) >= W) throw std::invalid_argument("matching_cost: max disparity >= image width");
  CostVolume cv(W, H, D, detail::max_cost(p));
  const int r = p.block_radius;
  if (p.cost == CostKind::census) {
    const auto cl = detail::census(left, r), cr = detail::census(right, r);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double* c = cv.at(x, y);
        for (std::size_t d = 0; d < D && d <= x; ++d)
          c[d] = double(std::popcount(cl[y * W + x] ^ cr[y * W + x - d]));
      }
  } else {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double* c = cv.at(x, y);
        for (std::size_t d = 0; d < D && d <= x; ++d) {
          double s = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
              s += std::abs(detail::clamped(left, long(x) + dx, long(y) + dy) -
                            detail::clamped(right, long(x - d) + dx, long(y) + dy));
          c[d] = s;
        }
      }
  }
  return cv;
}

/// Path directions in aggregation order.
inline constexpr int sgm_directions[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};

/// One path of the recurrence
///   L(p,d) = C(p,d) + min(L(p-r,d), L(p-r,d+-1) + P1, min_k L(p-r,k) + P2) - min_k L(p-r,k)
/// with L = C at the first pixel of each path.
inline CostVolume aggregate_path(const CostVolume& cost, int dx, int dy, double p1, double p2) {
  const long W = long(cost.width), H = long(cost.height);
  const std::size_t D = cost.depth;
  CostVolume L(cost.width, cost.height, D);
  // Visit pixels so that p - r is always done first.
  const long x0 = dx >= 0 ? 0 : W - 1, x1 = dx >= 0 ? W : -1, sx = dx >= 0 ? 1 : -1;
  const long y0 = dy >= 0 ? 0 : H - 1, y1 = dy >= 0 ? H : -1, sy = dy >= 0 ? 1 : -1;
  for (long y = y0; y != y1; y += sy)
    for (long x = x0; x != x1; x += sx) {
      const double* c = cost.at(std::size_t(x), std::size_t(y));
      double* out = L.at(std::size_t(x), std::size_t(y));
      const long px = x - dx, py = y - dy;
      if (px < 0 || px >= W || py < 0 || py >= H) {
        std::copy_n(c, D, out);
        continue;
      }
      const double* prev = L.at(std::size_t(px), std::size_t(py));
      const double m = *std::min_element(prev, prev + D);
      for (std::size_t d = 0; d < D; ++d) {
        double best = std::min(prev[d], m + p2);
        if (d > 0) best = std::min(best, prev[d - 1] + p1);
        if (d + 1 < D) best = std::min(best, prev[d + 1] + p1);
        out[d] = c[d] + best - m;
      }
    }
  return L;
}

/// Sum of the per-path recurrences over 4 or 8 directions. Zero penalties
/// are accepted here (plain sum of path costs).
inline CostVolume aggregate_sgm(const CostVolume& cost, const SgmParams& p) {
  if (p.paths != 4 && p.paths != 8) throw std::invalid_argument("sgm: paths must be 4 or 8");
  if (p.p1 < 0 || p.p2 < p.p1) throw std::invalid_argument("sgm: need P2 >= P1 >= 0");
  std::vector<CostVolume> paths(std::size_t(p.paths));
  parallel_for(paths.size(), resolve_threads(p.threads), [&](std::size_t i) {
    paths[i] = aggregate_path(cost, sgm_directions[i][0], sgm_directions[i][1], p.p1, p.p2);
  });
  CostVolume total(cost.width, cost.height, cost.depth);
  for (const auto& L : paths)
    for (std::size_t i = 0; i < total.data.size(); ++i) total.data[i] += L.data[i];
  return total;
}

/// Winner-take-all with a uniqueness test and parabolic sub-pixel
/// refinement. Pixels failing the test are marked invalid (disparity 0).
inline void select_disparity(const CostVolume& agg, const SgmParams& p, DisparityMap& disp, Mask& valid) {
  const std::size_t W = agg.width, H = agg.height, D = agg.depth;
  disp = DisparityMap(W, H, 0.f);
  valid = Mask(W, H, 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double* c = agg.at(x, y);
      const std::size_t best = std::size_t(std::min_element(c, c + D) - c);
      bool unique = true;
      for (std::size_t d = 0; d < D && unique; ++d)
        if ((d + 1 < best || d > best + 1) && c[d] * (1.0 - p.uniqueness) <= c[best]) unique = false;
      if (!unique || best >= std::min<std::size_t>(D, x + 1)) continue;
      double sub = double(best);
      if (best > 0 && best + 1 < D) {
        const double denom = c[best - 1] + c[best + 1] - 2 * c[best];
        if (denom > 0) sub += (c[best - 1] - c[best + 1]) / (2 * denom);
      }
      disp.at(x, y) = float(std::clamp(sub, 0.0, double(p.max_disparity)));
      valid.at(x, y) = 1;
    }
}

/// Clears `valid` where the raw cost is the same for every in-range shift
/// (no texture to match); aggregation would otherwise spread neighbouring
/// disparities into such regions.
inline void invalidate_textureless(const CostVolume& raw, Mask& valid, DisparityMap& disp) {
  for (std::size_t y = 0; y < raw.height; ++y)
    for (std::size_t x = 0; x < raw.width; ++x) {
      const double* c = raw.at(x, y);
      const std::size_t n = std::min(raw.depth, x + 1);
      if (n > 1 && std::all_of(c, c + n, [&](double v) { return v == c[0]; })) {
        valid.at(x, y) = 0;
        disp.at(x, y) = 0;
      }
    }
}

template <typename T>
Map2<T> flip_horizontal(const Map2<T>& m) {
  Map2<T> out(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) out.at(x, y) = m.at(m.width - 1 - x, y);
  return out;
}

struct SgbmResult {
  DisparityMap disp_l, disp_r;
  Mask valid_l, valid_r;
};

/// Left disparity from (left, right); right disparity by matching the
/// mirrored pair in the same direction and mirroring back. Pixels whose
/// disparity disagrees with the other view's by more than one pixel are
/// invalidated in both maps.
inline SgbmResult sgbm_disparity(const RgbImage& left, const RgbImage& right, const SgmParams& p) {
  p.validate();
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("sgbm: image sizes differ");
  const auto gl = to_gray(left), gr = to_gray(right);
  SgbmResult r;
  const auto cost_l = matching_cost(gl, gr, p);
  select_disparity(aggregate_sgm(cost_l, p), p, r.disp_l, r.valid_l);
  invalidate_textureless(cost_l, r.valid_l, r.disp_l);
  DisparityMap fd;
  Mask fv;
  const auto cost_r = matching_cost(flip_horizontal(gr), flip_horizontal(gl), p);
  select_disparity(aggregate_sgm(cost_r, p), p, fd, fv);
  invalidate_textureless(cost_r, fv, fd);
  r.disp_r = flip_horizontal(fd);
  r.valid_r = flip_horizontal(fv);

  const long W = long(left.width);
  auto check = [W](const DisparityMap& own, const Mask& own_valid, const DisparityMap& other,
                   const Mask& other_valid, int sign) {
    Mask ok(own.width, own.height, 0);
    for (std::size_t y = 0; y < own.height; ++y)
      for (std::size_t x = 0; x < own.width; ++x) {
        if (!own_valid.at(x, y)) continue;
        const long xo = std::lround(double(x) + sign * double(own.at(x, y)));
        if (xo < 0 || xo >= W || !other_valid.at(std::size_t(xo), y)) continue;
        ok.at(x, y) = std::abs(own.at(x, y) - other.at(std::size_t(xo), y)) <= 1.0f;
      }
    return ok;
  };
  auto ok_l = check(r.disp_l, r.valid_l, r.disp_r, r.valid_r, -1);
  auto ok_r = check(r.disp_r, r.valid_r, r.disp_l, r.valid_l, +1);
  r.valid_l = ok_l;
  r.valid_r = ok_r;
  for (std::size_t i = 0; i < r.disp_l.data.size(); ++i) {
    if (!r.valid_l.data[i]) r.disp_l.data[i] = 0;
    if (!r.valid_r.data[i]) r.disp_r.data[i] = 0;
  }
  return r;
}

/// Fills invalid pixels row by row with the smaller (farther) of the nearest
/// valid disparities to the left and right. A run reaching the image border
/// takes 0, the disparity of the background at infinity.
inline DisparityMap fill_holes(const DisparityMap& disp, const Mask& valid) {
  DisparityMap out = disp;
  const std::size_t W = disp.width;
  for (std::size_t y = 0; y < disp.height; ++y) {
    std::size_t x = 0;
    while (x < W) {
      if (valid.at(x, y)) {
        ++x;
        continue;
      }
      std::size_t end = x;
      while (end < W && !valid.at(end, y)) ++end;
      const bool has_l = x > 0, has_r = end < W;
      const float v = has_l && has_r ? std::min(disp.at(x - 1, y), disp.at(end, y)) : 0.f;
      for (std::size_t i = x; i < end; ++i) out.at(i, y) = v;
      x = end;
    }
  }
  return out;
}

}  // namespace ssr::stereo
