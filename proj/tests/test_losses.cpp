#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "ssr/autodiff/gradcheck.hpp"
#include "ssr/metrics/losses.hpp"
#include "ssr/metrics/metrics.hpp"

namespace ad = ssr::ad;
namespace m = ssr::metrics;
using ad::Shape;
using D = ad::Tensor<double>;
using ssr::scene::Vec3;

namespace {

D random_tensor(Shape shape, ssr::Rng& rng, double lo = 0.0, double hi = 1.0) {
  D t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<Vec3> random_points(std::size_t n, ssr::Rng& rng) {
  std::vector<Vec3> p(n);
  for (auto& v : p) v = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
  return p;
}

D to_tensor(const std::vector<Vec3>& p) {
  D t({p.size(), 3});
  for (std::size_t i = 0; i < p.size(); ++i) {
    t.data()[3 * i] = p[i].x;
    t.data()[3 * i + 1] = p[i].y;
    t.data()[3 * i + 2] = p[i].z;
  }
  return t;
}

}  // namespace

TEST(DisparityLoss, HandValuesAndLoopOracle) {
  D zero({1, 2, 1, 1}), pred({1, 2, 1, 1}, std::vector<double>{2, 3});
  EXPECT_DOUBLE_EQ(m::disparity_loss(pred, zero).item(), 13.0);
  EXPECT_EQ(m::disparity_loss(pred, pred).item(), 0.0);

  ssr::Rng rng(1);
  const std::size_t N = 3, H = 5, W = 7;
  auto p = random_tensor({N, 2, H, W}, rng, 0, 10), g = random_tensor({N, 2, H, W}, rng, 0, 10);
  double oracle = 0;
  for (std::size_t n = 0; n < N; ++n) {
    double per = 0;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < H * W; ++i) {
        const double e = p[(n * 2 + c) * H * W + i] - g[(n * 2 + c) * H * W + i];
        per += e * e;
      }
    oracle += per / double(H * W);
  }
  oracle /= double(N);
  EXPECT_NEAR(m::disparity_loss(p, g).item(), oracle, 1e-12);
  EXPECT_THROW(m::disparity_loss(p, D({N, 2, H, W + 1})), ad::ShapeError);
}

TEST(VolumeLoss, HandValuesAndLoopOracle) {
  D half({1}, 0.5), one({1}, 1.0);
  EXPECT_NEAR(m::volume_loss(half, one).item(), std::log(2.0), 1e-15);

  ssr::Rng rng(2);
  auto p = random_tensor({2, 4, 4, 4}, rng, 0.01, 0.99);
  D v({2, 4, 4, 4});
  for (auto& x : v.data()) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
  double oracle = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) oracle += v[i] * std::log(p[i]) + (1 - v[i]) * std::log(1 - p[i]);
  oracle = -oracle / double(p.numel());
  EXPECT_NEAR(m::volume_loss(p, v).item(), oracle, 1e-12);
  const double at_target = m::volume_loss(v, v).item();
  EXPECT_GE(at_target, 0.0);
  EXPECT_LT(at_target, 1e-11);
  EXPECT_GT(m::volume_loss(p, v).item(), 0.0);
  EXPECT_THROW(m::volume_loss(p, D({2, 4, 4, 3})), ad::ShapeError);
}

TEST(Chamfer, HandValuesAndEmptySets) {
  D a({1, 3}, std::vector<double>{0, 0, 0}), b({1, 3}, std::vector<double>{1, 0, 0});
  EXPECT_DOUBLE_EQ(m::chamfer_distance(b, a).item(), 2.0);
  EXPECT_DOUBLE_EQ(m::chamfer({{1, 0, 0}}, {{0, 0, 0}}), 2.0);
  EXPECT_THROW(m::chamfer_distance(D(Shape{0, 3}), a), std::invalid_argument);
  EXPECT_THROW(m::chamfer({}, {{0, 0, 0}}), std::invalid_argument);
  EXPECT_THROW(m::chamfer_naive({{0, 0, 0}}, {}), std::invalid_argument);
}

TEST(Chamfer, AllRoutesAgreeWithNaiveOracle) {
  ssr::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + std::size_t(rng.uniform() * 256), k = 1 + std::size_t(rng.uniform() * 256);
    auto p = random_points(n, rng), g = random_points(k, rng);
    const double oracle = m::chamfer_naive(p, g);
    EXPECT_NEAR(m::chamfer(p, g), oracle, 1e-12);
    EXPECT_NEAR(m::chamfer_distance(to_tensor(p), to_tensor(g)).item(), oracle, 1e-12);
    EXPECT_NEAR(m::chamfer_distance_composite(to_tensor(p), to_tensor(g)).item(), oracle, 1e-12);
    EXPECT_EQ(m::chamfer(p, p), 0.0);
  }
}

TEST(Chamfer, GridHandlesQueriesFarOutsideAndDuplicates) {
  ssr::Rng rng(4);
  auto g = random_points(500, rng);
  std::vector<Vec3> p{{10, -3, 0.2}, {0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, {-0.5, -0.5, -0.5}};
  EXPECT_NEAR(m::chamfer(p, g), m::chamfer_naive(p, g), 1e-12);
  std::vector<Vec3> flat(300);
  for (auto& v : flat) v = {rng.uniform(-1, 1), 0.25, rng.uniform(-1, 1)};
  EXPECT_NEAR(m::chamfer(flat, g), m::chamfer_naive(flat, g), 1e-12);
}

TEST(Chamfer, SymmetricAndPermutationInvariant) {
  ssr::Rng rng(5);
  auto p = random_points(64, rng), g = random_points(64, rng);
  EXPECT_NEAR(m::chamfer(p, g), m::chamfer(g, p), 1e-14);
  auto q = p;
  std::reverse(q.begin(), q.end());
  std::swap(q[3], q[40]);
  EXPECT_NEAR(m::chamfer(q, g), m::chamfer(p, g), 1e-14);
  EXPECT_NEAR(m::chamfer_distance(to_tensor(q), to_tensor(g)).item(),
              m::chamfer_distance(to_tensor(p), to_tensor(g)).item(), 1e-14);
}

TEST(Chamfer, FusedAndCompositeGradientsAgree) {
  ssr::Rng rng(6);
  auto p = to_tensor(random_points(40, rng)).set_requires_grad(true);
  auto g = to_tensor(random_points(70, rng)).set_requires_grad(true);
  ad::backward(m::chamfer_distance(p, g));
  std::vector<double> gp(p.grad().begin(), p.grad().end()), gg(g.grad().begin(), g.grad().end());
  p.zero_grad();
  g.zero_grad();
  ad::backward(m::chamfer_distance_composite(p, g));
  for (std::size_t i = 0; i < gp.size(); ++i) EXPECT_NEAR(gp[i], p.grad()[i], 1e-14);
  for (std::size_t i = 0; i < gg.size(); ++i) EXPECT_NEAR(gg[i], g.grad()[i], 1e-14);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto disp = [](const std::vector<D>& in) { return m::disparity_loss(in[0], in[1]); };
    EXPECT_LT(ad::check_gradients(disp, {{{2, 2, 3, 4}, 0, 5}, {{2, 2, 3, 4}, 0, 5}}, seed), 1e-4);
    ssr::Rng rng(seed);
    D target({3, 2, 2, 2});
    for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    auto vol = [&](const std::vector<D>& in) { return m::volume_loss(in[0], target); };
    EXPECT_LT(ad::check_gradients(vol, {{{3, 2, 2, 2}, 0.05, 0.95}}, seed), 1e-4);
    auto cd = [](const std::vector<D>& in) { return m::chamfer_distance(in[0], in[1]); };
    EXPECT_LT(ad::check_gradients(cd, {{{12, 3}}, {{9, 3}}}, seed), 1e-4);
    auto cd_batch = [](const std::vector<D>& in) {
      return m::chamfer_loss(in[0], {ad::slice(in[1], 0, 0, 5), ad::slice(in[1], 0, 5, 6)});
    };
    EXPECT_LT(ad::check_gradients(cd_batch, {{{2, 7, 3}}, {{11, 3}}}, seed), 1e-4);
  }
}

TEST(Iou, HandValuesAndSetOracle) {
  std::vector<double> p{0.9, 0.1};
  std::vector<std::uint8_t> v{1, 1};
  EXPECT_DOUBLE_EQ((m::iou<double>(p, v, 0.4)), 0.5);
  std::vector<std::uint8_t> none(8, 0);
  std::vector<double> low(8, 0.2);
  EXPECT_EQ(m::iou<double>(low, none), 1.0);
  EXPECT_THROW(m::iou<double>(p, none), std::invalid_argument);
  EXPECT_THROW(m::iou<double>(p, v, 1.0), std::invalid_argument);

  ssr::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> prob(512);
    std::vector<std::uint8_t> occ(512);
    std::set<std::size_t> a, b;
    for (std::size_t i = 0; i < 512; ++i) {
      prob[i] = float(rng.uniform());
      occ[i] = rng.uniform() < 0.4;
      if (double(prob[i]) > 0.4) a.insert(i);
      if (occ[i]) b.insert(i);
    }
    std::set<std::size_t> inter, uni(a);
    uni.insert(b.begin(), b.end());
    for (auto i : a)
      if (b.count(i)) inter.insert(i);
    EXPECT_EQ(m::iou<float>(prob, occ), double(inter.size()) / double(uni.size()));
    std::vector<float> exact(occ.begin(), occ.end());
    EXPECT_EQ(m::iou<float>(exact, occ), 1.0);
    double prev = 2.0;
    for (double t = 0.05; t < 1.0; t += 0.05) {
      std::vector<std::uint8_t> all(512, 1);
      const double v2 = m::iou<float>(prob, all, t);
      EXPECT_LE(v2, prev);
      EXPECT_GE(v2, 0.0);
      prev = v2;
    }
  }
}

TEST(Epe, ValuesMaskingAndErrors) {
  std::vector<float> gt{1, 2, 3, 4}, shifted{2, 3, 4, 5}, wild{2, 3, 4, 100};
  std::vector<std::uint8_t> none(4, 0), last{0, 0, 0, 1}, all(4, 1);
  EXPECT_EQ((m::epe<float, float>)(gt, gt, none), 0.0);
  EXPECT_EQ((m::epe<float, float>)(shifted, gt, none), 1.0);
  EXPECT_EQ((m::epe<float, float>)(wild, gt, last), 1.0);
  EXPECT_THROW((m::epe<float, float>)(gt, gt, all), std::invalid_argument);
  EXPECT_THROW((m::epe<float, float>)(gt, std::span<const float>(gt).first(3), none), std::invalid_argument);
}

TEST(MetricReport, MeanAndTsv) {
  m::MetricReport r{"iou", 0.4, {}, {}, {}};
  ssr::Rng rng(8);
  double s = 0;
  for (int i = 0; i < 10; ++i) {
    const double v = rng.uniform();
    s += v;
    r.add("s" + std::to_string(i), v);
  }
  EXPECT_EQ(r.count(), 10u);
  EXPECT_NEAR(r.mean(), s / 10, 1e-12);
  std::ostringstream os;
  m::write_report_tsv(os, {r});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "sample_id\tmetric\tvalue");
  int rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string id, metric;
    double v = 0;
    ls >> id >> metric >> v;
    EXPECT_EQ(metric, "iou");
    if (id != "mean") EXPECT_EQ(v, r.values[std::size_t(rows)]);
    ++rows;
  }
  EXPECT_EQ(rows, 11);
}
