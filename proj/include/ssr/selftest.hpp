#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "ssr/autodiff/batchnorm.hpp"
#include "ssr/autodiff/conv.hpp"
#include "ssr/autodiff/gradcheck.hpp"
#include "ssr/autodiff/spatial.hpp"
#include "ssr/metrics/losses.hpp"
#include "ssr/metrics/metrics.hpp"
#include "ssr/nets/cost_volume.hpp"
#include "ssr/nets/layers.hpp"
#include "ssr/scene/dataset.hpp"

namespace ssr::selftest {

/// Outcome of one check. `value` is the measured quantity and `limit` the
/// bound it is held to; `detail` explains a failure.
struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double value = 0;
  double limit = 0;
  std::string detail;
};

inline bool all_passed(const std::vector<CheckResult>& rs) {
  return std::all_of(rs.begin(), rs.end(), [](const CheckResult& r) { return r.passed; });
}

namespace detail {

using D = ad::Tensor<double>;

inline D random_tensor(ad::Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  D t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<scene::Vec3> random_points(std::size_t n, Rng& rng) {
  std::vector<scene::Vec3> p(n);
  for (auto& v : p) v = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return p;
}

inline D as_tensor(const std::vector<scene::Vec3>& p) {
  D t({p.size(), 3});
  for (std::size_t i = 0; i < p.size(); ++i) {
    t.raw()[3 * i] = p[i].x;
    t.raw()[3 * i + 1] = p[i].y;
    t.raw()[3 * i + 2] = p[i].z;
  }
  return t;
}

// Straight from the definition: mean nearest squared distance both ways.
inline double chamfer_loops(const std::vector<scene::Vec3>& a, const std::vector<scene::Vec3>& b) {
  auto one_way = [](const std::vector<scene::Vec3>& from, const std::vector<scene::Vec3>& to) {
    double total = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      total += best;
    }
    return total / double(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

inline D cost_volume_loops(const D& l, const D& r, std::size_t dmax, std::size_t s) {
  const std::size_t N = l.dim(0), C = l.dim(1), H = l.dim(2), W = l.dim(3), Dn = dmax / s + 1;
  D out({N, 2 * C, Dn, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < 2 * C; ++c)
      for (std::size_t d = 0; d < Dn; ++d)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            double v = 0;
            if (c < C)
              v = l[((n * C + c) * H + y) * W + x];
            else if (x >= d * s)
              v = r[((n * C + c - C) * H + y) * W + x - d * s];
            out.raw()[(((n * 2 * C + c) * Dn + d) * H + y) * W + x] = v;
          }
  return out;
}

}  // namespace detail

/// Finite-difference checks at f64 for every differentiable op and loss,
/// `seeds` random draws each. `inject_nan` adds a case whose forward pass is
/// poisoned, which must surface as a failure.
inline std::vector<CheckResult> gradient_suite(std::size_t seeds = 10, bool inject_nan = false) {
  using detail::D;
  using V = std::vector<D>;
  namespace m = metrics;
  struct Case {
    std::string name;
    std::function<ad::GradFn(std::uint64_t)> make;  // per-seed closure (targets, layers)
    std::vector<ad::InputSpec> specs;
  };
  auto fixed = [](ad::GradFn fn) { return [fn](std::uint64_t) { return fn; }; };
  const ad::InputSpec v12{{12}};
  std::vector<Case> cases = {
      {"add", fixed([](const V& in) { return ad::add(in[0], in[1]); }), {v12, v12}},
      {"sub", fixed([](const V& in) { return ad::sub(in[0], in[1]); }), {v12, v12}},
      {"mul", fixed([](const V& in) { return ad::mul(in[0], in[1]); }), {v12, v12}},
      {"scale", fixed([](const V& in) { return ad::scale(in[0], -1.7); }), {v12}},
      {"add_scalar", fixed([](const V& in) { return ad::square(ad::add_scalar(in[0], 0.3)); }), {v12}},
      {"square", fixed([](const V& in) { return ad::square(in[0]); }), {v12}},
      {"relu", fixed([](const V& in) { return ad::relu(in[0]); }), {{{20}, -1, 1, 0.1}}},
      {"sigmoid", fixed([](const V& in) { return ad::sigmoid(in[0]); }), {{{12}, -4, 4}}},
      {"log", fixed([](const V& in) { return ad::log(in[0]); }), {{{12}, 0.2, 2.0}}},
      {"clamp", fixed([](const V& in) { return ad::clamp(in[0], -0.5, 0.5); }), {{{20}, -1, 1}}},
      {"sum", fixed([](const V& in) { return ad::sum(ad::mul(in[0], in[0])); }), {v12}},
      {"mean", fixed([](const V& in) { return ad::mean(ad::mul(in[0], in[1])); }), {v12, v12}},
      {"reshape+flatten",
       fixed([](const V& in) { return ad::flatten(ad::reshape(ad::mul(in[0], in[1]), {2, 3, 2})); }),
       {v12, v12}},
      {"concat", fixed([](const V& in) { return ad::concat(V{in[0], ad::square(in[1])}, 1); }),
       {{{2, 3, 2}}, {{2, 1, 2}}}},
      {"slice", fixed([](const V& in) { return ad::slice(ad::square(in[0]), 1, 1, 2); }), {{{2, 4, 3}}}},
      {"min_reduce", fixed([](const V& in) { return ad::add(ad::min_reduce(in[0], 0), ad::min_reduce(in[0], 1)); }),
       {{{5, 5}}}},
      {"linear", fixed([](const V& in) { return ad::linear(in[0], in[1], in[2]); }), {{{3, 5}}, {{4, 5}}, {{4}}}},
      {"pairwise_sq_distances", fixed([](const V& in) { return ad::pairwise_sq_distances(in[0], in[1]); }),
       {{{4, 3}}, {{5, 3}}}},
      {"pad_reflect2d+crop2d",
       fixed([](const V& in) { return ad::crop2d(ad::pad_reflect2d(in[0], 3, 2), 5, 5); }),
       {{{1, 2, 3, 4}}}},
      {"conv2d s1", fixed([](const V& in) { return ad::conv2d(in[0], in[1], in[2], 1, 1); }),
       {{{2, 2, 5, 4}}, {{3, 2, 3, 3}}, {{3}}}},
      {"conv2d s2", fixed([](const V& in) { return ad::conv2d(in[0], in[1], in[2], 2, 1); }),
       {{{2, 2, 7, 6}}, {{3, 2, 3, 3}}, {{3}}}},
      {"conv_transpose2d s2", fixed([](const V& in) { return ad::conv_transpose2d(in[0], in[1], in[2], 2, 1); }),
       {{{2, 3, 3, 4}}, {{3, 2, 4, 4}}, {{2}}}},
      {"conv3d", fixed([](const V& in) { return ad::conv3d(in[0], in[1], in[2], 1, 1); }),
       {{{2, 2, 3, 4, 3}}, {{2, 2, 3, 3, 3}}, {{2}}}},
      {"conv_transpose3d s2", fixed([](const V& in) { return ad::conv_transpose3d(in[0], in[1], in[2], 2, 1); }),
       {{{1, 2, 2, 2, 3}}, {{2, 2, 4, 4, 4}}, {{2}}}},
      {"batch_norm train",
       fixed([](const V& in) {
         ad::RunningStats<double> stats(3);
         return ad::batch_norm(in[0], in[1], in[2], stats, ad::Mode::train);
       }),
       {{{4, 3, 2, 3}}, {{3}}, {{3}}}},
      {"batch_norm eval",
       fixed([](const V& in) {
         ad::RunningStats<double> stats(3);
         stats.mean = {0.1, -0.2, 0.3};
         stats.var = {0.5, 1.5, 2.0};
         return ad::batch_norm(in[0], in[1], in[2], stats, ad::Mode::eval);
       }),
       {{{4, 3, 2, 3}}, {{3}}, {{3}}}},
      {"cost_volume s1", fixed([](const V& in) { return nets::build_cost_volume(in[0], in[1], 3, 1); }),
       {{{2, 2, 3, 5}}, {{2, 2, 3, 5}}}},
      {"cost_volume s2", fixed([](const V& in) { return nets::build_cost_volume(in[0], in[1], 4, 2); }),
       {{{1, 2, 3, 6}}, {{1, 2, 3, 6}}}},
      {"residual_block",
       [](std::uint64_t seed) -> ad::GradFn {
         auto reg = std::make_shared<ad::ParameterRegistry<double>>();
         Rng rng(seed);
         auto rb = std::make_shared<nets::ResidualBlock<double>>(*reg, "rb", 3, 4, 2, rng);
         return [reg, rb](const V& in) { return (*rb)(in[0], ad::Mode::train); };
       },
       {{{2, 3, 6, 6}}}},
      {"fire_module",
       [](std::uint64_t seed) -> ad::GradFn {
         auto reg = std::make_shared<ad::ParameterRegistry<double>>();
         Rng rng(seed);
         auto fire = std::make_shared<nets::FireModule<double>>(*reg, "fire", 3, 2, 3, 3, rng);
         return [reg, fire](const V& in) { return (*fire)(in[0]); };
       },
       {{{2, 3, 4, 4}}}},
      {"disparity_loss", fixed([](const V& in) { return m::disparity_loss(in[0], in[1]); }),
       {{{2, 2, 3, 4}, 0, 5}, {{2, 2, 3, 4}, 0, 5}}},
      {"volume_loss",
       [](std::uint64_t seed) -> ad::GradFn {
         Rng rng(mix_seed(seed, 77));
         D target({3, 2, 2, 2});
         for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
         return [target](const V& in) { return m::volume_loss(in[0], target); };
       },
       {{{3, 2, 2, 2}, 0.05, 0.95}}},
      {"chamfer_distance", fixed([](const V& in) { return m::chamfer_distance(in[0], in[1]); }),
       {{{12, 3}}, {{9, 3}}}},
      {"chamfer_distance composite",
       fixed([](const V& in) { return m::chamfer_distance_composite(in[0], in[1]); }), {{{12, 3}}, {{9, 3}}}},
      {"chamfer_loss batch",
       fixed([](const V& in) {
         return m::chamfer_loss(in[0], {ad::slice(in[1], 0, 0, 5), ad::slice(in[1], 0, 5, 6)});
       }),
       {{{2, 7, 3}}, {{11, 3}}}},
  };
  if (inject_nan)
    cases.push_back({"injected nan",
                     fixed([](const V& in) { return ad::scale(in[0], std::numeric_limits<double>::quiet_NaN()); }),
                     {v12}});

  constexpr double limit = 1e-4;
  std::vector<CheckResult> out;
  for (const auto& c : cases) {
    CheckResult r{"gradients", c.name, true, 0, limit, ""};
    for (std::uint64_t seed = 1; seed <= seeds && r.passed; ++seed) {
      try {
        r.value = std::max(r.value, ad::check_gradients(c.make(seed), c.specs, seed));
        if (!(r.value < limit)) {
          r.passed = false;
          r.detail = "seed " + std::to_string(seed) + ": max rel err " + io::format_real(r.value);
        }
      } catch (const std::exception& e) {
        r.passed = false;
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.detail = "seed " + std::to_string(seed) + ": " + e.what();
      }
    }
    out.push_back(r);
  }
  return out;
}

/// Chamfer against the O(n^2) definition through every route, IoU against
/// set arithmetic, and the identity cases CD(P,P) = 0, IoU(V,V) = 1.
inline std::vector<CheckResult> metric_suite(std::size_t instances = 100, std::uint64_t seed = 2024) {
  using detail::D;
  Rng rng(seed);
  CheckResult cd{"metrics", "chamfer vs O(n^2) loops", true, 0, 1e-12, ""};
  CheckResult cd_self{"metrics", "CD(P,P) = 0", true, 0, 0, ""};
  for (std::size_t k = 0; k < instances; ++k) {
    const auto a = detail::random_points(1 + rng.index(256), rng);
    const auto b = detail::random_points(1 + rng.index(256), rng);
    const double truth = detail::chamfer_loops(a, b);
    const double routes[] = {metrics::chamfer_distance(detail::as_tensor(a), detail::as_tensor(b)).item(),
                             metrics::chamfer_distance_composite(detail::as_tensor(a), detail::as_tensor(b)).item(),
                             metrics::chamfer(a, b), metrics::chamfer_naive(a, b)};
    for (double v : routes) cd.value = std::max(cd.value, std::abs(v - truth));
    for (double v : {metrics::chamfer(a, a), double(metrics::chamfer_distance(detail::as_tensor(a), detail::as_tensor(a)).item())})
      cd_self.value = std::max(cd_self.value, std::abs(v));
  }
  cd.passed = cd.value <= cd.limit;
  cd_self.passed = cd_self.value == 0;

  CheckResult iou{"metrics", "iou vs set arithmetic (8^3)", true, 0, 0, ""};
  CheckResult iou_self{"metrics", "IoU(V,V) = 1", true, 0, 0, ""};
  constexpr std::size_t n = 8 * 8 * 8;
  for (std::size_t k = 0; k < instances; ++k) {
    std::vector<double> prob(n);
    std::vector<std::uint8_t> gt(n);
    const double fill = rng.uniform(0.05, 0.95);
    std::set<std::size_t> A, B;
    for (std::size_t i = 0; i < n; ++i) {
      prob[i] = rng.uniform();
      gt[i] = rng.uniform() < fill;
      if (prob[i] > metrics::default_iou_threshold) A.insert(i);
      if (gt[i]) B.insert(i);
    }
    std::vector<std::size_t> inter, uni;
    std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(inter));
    std::set_union(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(uni));
    const double expect = uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
    const double got = metrics::iou(std::span<const double>(prob), std::span<const std::uint8_t>(gt));
    iou.value = std::max(iou.value, std::abs(got - expect));
    std::vector<double> same(gt.begin(), gt.end());
    iou_self.value =
        std::max(iou_self.value, std::abs(metrics::iou(std::span<const double>(same), std::span<const std::uint8_t>(gt)) - 1.0));
  }
  iou.passed = iou.value == 0;
  iou_self.passed = iou_self.value == 0;
  return {cd, cd_self, iou, iou_self};
}

/// build_cost_volume against per-element loops, bit for bit, on random sizes
/// and every shift index.
inline std::vector<CheckResult> cost_volume_suite(std::size_t instances = 20, std::uint64_t seed = 99) {
  Rng rng(seed);
  CheckResult r{"cost_volume", "cost volume vs loops (bit-exact)", true, 0, 0, ""};
  std::size_t mismatched = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t N = 1 + rng.index(2), C = 1 + rng.index(4), H = 1 + rng.index(5),
                      W = 2 + rng.index(8), s = 1 + rng.index(2);
    const std::size_t dmax = s + rng.index(W);
    const auto l = detail::random_tensor({N, C, H, W}, rng), rt = detail::random_tensor({N, C, H, W}, rng);
    const auto got = nets::build_cost_volume(l, rt, dmax, s);
    const auto want = detail::cost_volume_loops(l, rt, dmax, s);
    if (got.shape() != want.shape()) {
      r.passed = false;
      r.detail = "shape " + ad::to_string(got.shape()) + " vs " + ad::to_string(want.shape());
      continue;
    }
    for (std::size_t i = 0; i < got.numel(); ++i)
      mismatched += std::bit_cast<std::uint64_t>(got[i]) != std::bit_cast<std::uint64_t>(want[i]);
  }
  r.value = double(mismatched);
  if (mismatched) {
    r.passed = false;
    r.detail = std::to_string(mismatched) + " elements differ";
  }
  return {r};
}

/// Scene-generation invariants over `samples` default samples plus the
/// frontal-plane disparity at 2 m with the 224 px camera.
inline std::vector<CheckResult> geometry_suite(std::size_t samples = 50, std::uint64_t seed = 4) {
  scene::DatasetConfig cfg;
  cfg.count = samples;
  cfg.seed = seed;
  CheckResult ident{"geometry", "disparity/depth identity (bit-exact)", true, 0, 0, ""};
  CheckResult lr{"geometry", "left-right consistency <= 1 px (worst sample fraction)", true, 1, 0.99, ""};
  CheckResult vox{"geometry", "surface points in occupied voxels, R=32 (worst sample)", true, 1, 0.99, ""};
  for (std::size_t i = 0; i < samples; ++i) {
    const auto s = scene::make_sample(cfg, i);
    for (const auto& [depth, disp] : {std::pair{&s.depth_l, &s.disp_l}, std::pair{&s.depth_r, &s.disp_r}})
      for (std::size_t k = 0; k < depth->data.size(); ++k)
        if (std::bit_cast<std::uint32_t>(scene::disparity_from_depth(depth->data[k], s.camera)) !=
            std::bit_cast<std::uint32_t>(disp->data[k]))
          ident.value += 1;
    std::size_t fg = 0, ok = 0;
    for (std::size_t y = 0; y < s.disp_l.height; ++y)
      for (std::size_t x = 0; x < s.disp_l.width; ++x) {
        if (s.occl_l.at(x, y) || !std::isfinite(s.depth_l.at(x, y))) continue;
        ++fg;
        const long xr = long(x) - std::lround(s.disp_l.at(x, y));
        ok += xr >= 0 && std::abs(s.disp_l.at(x, y) - s.disp_r.at(std::size_t(xr), y)) <= 1.0f;
      }
    if (fg) lr.value = std::min(lr.value, double(ok) / double(fg));
    std::size_t inside = 0;
    for (const auto& p : s.points.points) inside += s.voxels.contains(p);
    vox.value = std::min(vox.value, double(inside) / double(s.points.size()));
    if (s.voxels.resolution != 32) {
      vox.passed = false;
      vox.detail = "sample voxel resolution " + std::to_string(s.voxels.resolution);
    }
  }
  ident.passed = ident.value == 0;
  if (!ident.passed) ident.detail = io::format_real(ident.value) + " pixels differ";
  lr.passed = lr.value >= lr.limit;
  vox.passed = vox.passed && vox.value >= vox.limit;

  // Frontal plane: a unit box whose front face sits at Z = 2 m.
  scene::StereoCamera cam;
  cam.image_width_px = cam.image_height_px = 224;
  const auto render = scene::render_stereo(scene::make_primitive(scene::ShapeKind::box, {}, 0), {0, 0, 2.5}, cam);
  const auto disp = scene::depth_to_disparity(render.depth_l, cam);
  const double expect = 35.0 / 32.0 * 224.0 * 0.130 / 2.0;
  CheckResult plane{"geometry", "frontal plane at 2 m, 224 px: disparity 15.925", true, 0, 0.01, ""};
  std::size_t covered = 0;
  for (std::size_t k = 0; k < disp.data.size(); ++k) {
    if (!std::isfinite(render.depth_l.data[k])) continue;
    ++covered;
    plane.value = std::max(plane.value, std::abs(double(disp.data[k]) - expect));
  }
  plane.passed = covered > 1000 && plane.value <= plane.limit;
  if (covered <= 1000) plane.detail = "only " + std::to_string(covered) + " pixels covered";
  return {ident, lr, plane, vox};
}

}  // namespace ssr::selftest
