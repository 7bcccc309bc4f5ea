#include <gtest/gtest.h>

#include "ssr/metrics/metrics.hpp"
#include "ssr/random.hpp"
#include "ssr/scene/dataset.hpp"
#include "ssr/stereo/sgbm.hpp"

namespace st = ssr::stereo;
using namespace ssr::scene;

namespace {

st::GrayImage noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  ssr::Rng rng(seed);
  st::GrayImage g(w, h);
  for (auto& v : g.data) v = std::floor(rng.uniform(0, 256));
  return g;
}

st::GrayImage shifted(const st::GrayImage& g, std::size_t k) {
  st::GrayImage out(g.width, g.height);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) out.at(x, y) = g.at(std::min(x + k, g.width - 1), y);
  return out;
}

RgbImage to_rgb(const st::GrayImage& g) {
  RgbImage img(g.width, g.height);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, std::size_t(c)) = float(g.at(x, y) / 255.0);
  return img;
}

}  // namespace

TEST(MatchingCost, ZeroShiftOfIdenticalImagesIsFree) {
  auto g = noise_image(30, 12, 1);
  for (auto kind : {st::CostKind::census, st::CostKind::sad}) {
    st::SgmParams p;
    p.cost = kind;
    p.max_disparity = 6;
    auto cv = st::matching_cost(g, g, p);
    ASSERT_EQ(cv.depth, 7u);
    for (std::size_t y = 0; y < 12; ++y)
      for (std::size_t x = 0; x < 30; ++x) EXPECT_EQ(cv.at(x, y)[0], 0.0);
    // Shifts leaving the image cost the maximum.
    EXPECT_EQ(cv.at(2, 5)[3], st::detail::max_cost(p));
  }
}

TEST(MatchingCost, SyntheticShiftHasArgminAtShift) {
  auto left = noise_image(60, 20, 2);
  auto argmin = [](const double* c, std::size_t n) { return std::size_t(std::min_element(c, c + n) - c); };
  for (std::size_t k : {0u, 3u, 7u}) {
    // right(x) = left(x + k), so left x matches right x - k.
    auto right = shifted(left, k);
    st::SgmParams p;
    p.max_disparity = 10;
    // Census codes of saturated pixels coincide, so only the zero cost is
    // exact for the raw census volume; aggregation resolves the ties.
    auto census = st::matching_cost(left, right, p);
    auto agg = st::aggregate_sgm(census, p);
    p.cost = st::CostKind::sad;
    auto sad = st::matching_cost(left, right, p);
    for (std::size_t y = 2; y + 2 < 20; ++y)
      for (std::size_t x = 12; x + 2 + k < 60; ++x) {
        EXPECT_EQ(census.at(x, y)[k], 0.0);
        EXPECT_EQ(argmin(sad.at(x, y), sad.depth), k) << x << "," << y;
        EXPECT_EQ(argmin(agg.at(x, y), agg.depth), k) << x << "," << y;
      }
  }
}

TEST(MatchingCost, ConstantImagesGiveFlatCostsAndWideRangeThrows) {
  st::GrayImage flat(20, 6, 128.0);
  st::SgmParams p;
  p.max_disparity = 5;
  auto cv = st::matching_cost(flat, flat, p);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 5; x < 20; ++x)
      for (std::size_t d = 0; d < cv.depth; ++d) EXPECT_EQ(cv.at(x, y)[d], cv.at(x, y)[0]);
  p.max_disparity = 20;
  EXPECT_THROW(st::matching_cost(flat, flat, p), std::invalid_argument);
  p.max_disparity = 5;
  EXPECT_THROW(st::matching_cost(flat, st::GrayImage(21, 6), p), std::invalid_argument);
  p.p2 = p.p1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Aggregation, ZeroPenaltiesSumRawCost) {
  auto cv = st::matching_cost(noise_image(16, 9, 3), noise_image(16, 9, 4), st::SgmParams{2, 4});
  for (int paths : {4, 8}) {
    st::SgmParams p;
    p.p1 = p.p2 = 0;
    p.paths = paths;
    auto agg = st::aggregate_sgm(cv, p);
    for (std::size_t i = 0; i < cv.data.size(); ++i) EXPECT_EQ(agg.data[i], paths * cv.data[i]);
  }
}

TEST(Aggregation, SingleRowMatchesHandRolledRecurrence) {
  // 5x1 strip, 3 disparities, left-to-right path.
  st::CostVolume cv(5, 1, 3);
  const double raw[5][3] = {{4, 1, 6}, {2, 7, 3}, {9, 0, 8}, {5, 5, 1}, {3, 6, 2}};
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t d = 0; d < 3; ++d) cv.at(x, 0)[d] = raw[x][d];
  const double p1 = 1.5, p2 = 4;
  double L[5][3];
  for (int d = 0; d < 3; ++d) L[0][d] = raw[0][d];
  for (int x = 1; x < 5; ++x) {
    const double m = std::min({L[x - 1][0], L[x - 1][1], L[x - 1][2]});
    for (int d = 0; d < 3; ++d) {
      double best = L[x - 1][d];
      for (int k = 0; k < 3; ++k) {
        const double pen = k == d ? 0 : (std::abs(k - d) == 1 ? p1 : p2);
        best = std::min(best, L[x - 1][k] + pen);
      }
      L[x][d] = raw[x][d] + best - m;
    }
  }
  auto agg = st::aggregate_path(cv, 1, 0, p1, p2);
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(agg.at(x, 0)[d], L[x][d]) << x << "," << d;
}

TEST(Aggregation, NeverNegative) {
  auto cv = st::matching_cost(noise_image(24, 16, 5), noise_image(24, 16, 6), st::SgmParams{2, 8});
  auto agg = st::aggregate_sgm(cv, st::SgmParams{});
  for (double v : agg.data) EXPECT_GE(v, 0.0);
}

TEST(Sgbm, IdenticalImagesGiveZeroDisparity) {
  auto img = to_rgb(noise_image(40, 20, 7));
  st::SgmParams p;
  p.max_disparity = 8;
  auto r = st::sgbm_disparity(img, img, p);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < r.disp_l.data.size(); ++i)
    if (r.valid_l.data[i]) {
      ++valid;
      EXPECT_EQ(r.disp_l.data[i], 0.f);
    }
  EXPECT_GT(valid, 600u);
}

TEST(Sgbm, TexturelessRegionIsInvalid) {
  auto g = noise_image(60, 20, 8);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 20; x < 45; ++x) g.at(x, y) = 100;
  auto img = to_rgb(g);
  st::SgmParams p;
  p.max_disparity = 8;
  auto r = st::sgbm_disparity(img, img, p);
  // Centre of the flat patch: every census window and every shifted window is flat.
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 33; x < 43; ++x) {
      EXPECT_EQ(r.valid_l.at(x, y), 0) << x << "," << y;
      EXPECT_EQ(r.valid_r.at(x - 8, y), 0) << x << "," << y;
    }
}

TEST(Sgbm, FrontalTexturedPlaneMatchesGeometry) {
  StereoCamera cam;
  const double z = 1.6;
  Mesh plane = apply_texture(make_box({0, 0, 0}, {1.4, 1.4, 0.01}, {0.7, 0.6, 0.5}), 0.03, 0.45, 9);
  auto views = render_stereo(plane, {0, 0, z + 0.005}, cam);
  st::SgmParams p;
  auto r = st::sgbm_disparity(views.left_rgb, views.right_rgb, p);
  std::vector<float> vals;
  for (std::size_t i = 0; i < r.disp_l.data.size(); ++i)
    if (r.valid_l.data[i] && std::isfinite(views.depth_l.data[i])) vals.push_back(r.disp_l.data[i]);
  ASSERT_GT(vals.size(), 5000u);
  std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
  const double expected = cam.focal_px() * cam.baseline_m() / z;
  EXPECT_NEAR(vals[vals.size() / 2], expected, 0.5);
}

TEST(Sgbm, GeneratedSamplesWithinEndpointBudget) {
  DatasetConfig cfg;
  cfg.count = 4;
  cfg.n_gt = 16;
  cfg.voxel_resolution = 4;
  for (std::size_t i = 0; i < cfg.count; ++i) {
    auto s = make_sample(cfg, i);
    auto r = st::sgbm_disparity(s.left_rgb, s.right_rgb, st::SgmParams{});
    for (std::size_t k = 0; k < r.disp_l.data.size(); ++k) {
      EXPECT_GE(r.disp_l.data[k], 0.f);
      EXPECT_LE(r.disp_l.data[k], 48.f);
    }
    Mask skip(s.disp_l.width, s.disp_l.height);
    for (std::size_t k = 0; k < skip.data.size(); ++k)
      skip.data[k] = !r.valid_l.data[k] || s.occl_l.data[k] || s.disp_l.data[k] == 0;
    EXPECT_LE((ssr::metrics::epe<float, float>(r.disp_l.data, s.disp_l.data, skip.data)), 2.0) << i;
    auto again = st::sgbm_disparity(s.left_rgb, s.right_rgb, st::SgmParams{});
    EXPECT_EQ(again.disp_l.data, r.disp_l.data);
    EXPECT_EQ(again.valid_r.data, r.valid_r.data);
  }
}

TEST(FillHoles, UsesFartherNeighbourAndZeroAtBorders) {
  DisparityMap d(8, 1, 0.f);
  Mask v(8, 1, 0);
  const float vals[8] = {0, 5, 0, 0, 9, 0, 7, 0};
  const std::uint8_t ok[8] = {0, 1, 0, 0, 1, 0, 1, 0};
  for (std::size_t x = 0; x < 8; ++x) {
    d.at(x, 0) = vals[x];
    v.at(x, 0) = ok[x];
  }
  auto f = st::fill_holes(d, v);
  const float expect[8] = {0, 5, 5, 5, 9, 7, 7, 0};
  for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(f.at(x, 0), expect[x]) << x;
}
