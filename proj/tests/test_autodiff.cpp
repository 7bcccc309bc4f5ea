#include <gtest/gtest.h>

#include <cstring>

#include "ssr/autodiff/batchnorm.hpp"
#include "ssr/autodiff/checkpoint.hpp"
#include "ssr/autodiff/conv.hpp"
#include "ssr/autodiff/gradcheck.hpp"
#include "ssr/autodiff/spatial.hpp"

namespace ad = ssr::ad;
using T = ad::Tensor<double>;
using ad::Shape;

namespace {

T ones(Shape s) { return T(std::move(s), 1.0); }

}  // namespace

TEST(Conv2d, AllOnesSumsTheWindow) {
  auto y = ad::conv2d(ones({1, 1, 3, 3}), ones({1, 1, 3, 3}), T({1}, 0.0));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  T x({1, 1, 4, 5});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = double(i) * 0.25 - 1.0;
  auto y = ad::conv2d(x, ones({1, 1, 1, 1}), T({1}, 0.0));
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, OutputShapeArithmetic) {
  auto y = ad::conv2d(ones({2, 3, 9, 7}), ones({4, 3, 3, 3}), T({4}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 4}));
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  try {
    ad::conv2d(ones({1, 2, 4, 4}), ones({1, 3, 3, 3}), T({1}));
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,2,4,4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[1,3,3,3]"), std::string::npos) << msg;
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  auto fn = [](const std::vector<T>& in) { return ad::conv2d(in[0], in[1], in[2], 1, 1); };
  double err = ad::check_gradients(fn, {{{2, 3, 8, 8}}, {{4, 3, 3, 3}}, {{4}}}, 7);
  EXPECT_LT(err, 1e-4);
}

TEST(ConvTranspose2d, DeltaInputReproducesKernel) {
  T w({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) w.data()[i] = double(i + 1);
  auto y = ad::conv_transpose2d(ones({1, 1, 1, 1}), w, T({1}, 0.0));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], w[i]);
}

TEST(ConvTranspose2d, StrideTwoDoublesResolution) {
  auto y = ad::conv_transpose2d(ones({1, 2, 4, 4}), ones({2, 3, 4, 4}), T({3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 8, 8}));
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  // <conv(x), y> == <x, conv_T(y)> for the same weights.
  ssr::Rng rng(3);
  T x({1, 2, 7, 7}), w({3, 2, 3, 3}), y({1, 3, 4, 4});
  for (auto* t : {&x, &w, &y})
    for (auto& v : t->data()) v = rng.uniform(-1, 1);
  auto cx = ad::conv2d(x, w, T({3}, 0.0), 2, 1);
  // conv_transpose weight layout is [C_in, C_out, ...]: reuse w as [3 -> 2].
  auto ty = ad::conv_transpose2d(y, w, T({2}, 0.0), 2, 1);
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Conv3d, AllOnesSumsTheWindow) {
  auto y = ad::conv3d(ones({1, 1, 2, 2, 2}), ones({1, 1, 2, 2, 2}), T({1}, 0.0));
  EXPECT_EQ(y.item(), 8.0);
}

TEST(ConvFamily, GradientChecksAcrossStridesAndPadding) {
  struct Case {
    const char* name;
    ad::GradFn fn;
    std::vector<ad::InputSpec> specs;
  };
  std::vector<Case> cases = {
      {"conv2d s2", [](const std::vector<T>& in) { return ad::conv2d(in[0], in[1], in[2], 2, 1); },
       {{{2, 2, 7, 6}}, {{3, 2, 3, 3}}, {{3}}}},
      {"conv_transpose2d s2",
       [](const std::vector<T>& in) { return ad::conv_transpose2d(in[0], in[1], in[2], 2, 1); },
       {{{2, 3, 3, 4}}, {{3, 2, 4, 4}}, {{2}}}},
      {"conv3d", [](const std::vector<T>& in) { return ad::conv3d(in[0], in[1], in[2], 1, 1); },
       {{{2, 2, 3, 4, 3}}, {{2, 2, 3, 3, 3}}, {{2}}}},
      {"conv_transpose3d s2",
       [](const std::vector<T>& in) { return ad::conv_transpose3d(in[0], in[1], in[2], 2, 1); },
       {{{1, 2, 2, 2, 3}}, {{2, 2, 4, 4, 4}}, {{2}}}},
  };
  for (const auto& c : cases) EXPECT_LT(ad::check_gradients(c.fn, c.specs, 11), 1e-4) << c.name;
}

TEST(BatchNorm, ConstantChannelMapsToBeta) {
  T x({3, 2, 2, 2});
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 4; ++i) {
      x.data()[(n * 2 + 0) * 4 + i] = 5.0;
      x.data()[(n * 2 + 1) * 4 + i] = -2.0;
    }
  T gamma({2}, 1.5), beta({2}, std::vector<double>{0.25, -0.75});
  ad::RunningStats<double> stats(2);
  auto y = ad::batch_norm(x, gamma, beta, stats, ad::Mode::train);
  for (std::size_t j = 0; j < y.numel(); ++j) EXPECT_EQ(y[j], beta[(j / 4) % 2]);
}

TEST(BatchNorm, TrainModeStandardizesEachChannel) {
  ssr::Rng rng(5);
  T x({4, 3, 5});
  for (auto& v : x.data()) v = rng.uniform(-3, 7);
  ad::RunningStats<double> stats(3);
  auto y = ad::batch_norm(x, T({3}, 1.0), T({3}, 0.0), stats, ad::Mode::train, 0.1, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 5; ++i) m += y[(n * 3 + c) * 5 + i];
    m /= 20;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 5; ++i) v += std::pow(y[(n * 3 + c) * 5 + i] - m, 2);
    v /= 20;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(BatchNorm, GradientChecksInBothModes) {
  auto train = [](const std::vector<T>& in) {
    ad::RunningStats<double> stats(3);
    return ad::batch_norm(in[0], in[1], in[2], stats, ad::Mode::train);
  };
  auto eval = [](const std::vector<T>& in) {
    ad::RunningStats<double> stats(3);
    stats.mean = {0.1, -0.2, 0.3};
    stats.var = {0.5, 1.5, 2.0};
    return ad::batch_norm(in[0], in[1], in[2], stats, ad::Mode::eval);
  };
  std::vector<ad::InputSpec> specs{{{4, 3, 2, 3}}, {{3}}, {{3}}};
  EXPECT_LT(ad::check_gradients(train, specs, 2), 1e-4);
  EXPECT_LT(ad::check_gradients(eval, specs, 2), 1e-4);
}

TEST(BatchNorm, EvalOutputIndependentOfBatchComposition) {
  ad::RunningStats<double> stats(2);
  stats.mean = {0.5, -1.0};
  stats.var = {2.0, 0.25};
  T gamma({2}, std::vector<double>{1.2, 0.7}), beta({2}, std::vector<double>{0.1, 0.2});
  T single({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  T batch({3, 2, 3}, std::vector<double>{9, 8, 7, 6, 5, 4, 1, 2, 3, 4, 5, 6, -1, -2, -3, 0, 0, 0});
  auto a = ad::batch_norm(single, gamma, beta, stats, ad::Mode::eval);
  auto b = ad::batch_norm(batch, gamma, beta, stats, ad::Mode::eval);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a[i], b[6 + i]);
}

TEST(Elementwise, SigmoidAtZeroIsHalf) {
  EXPECT_EQ(ad::sigmoid(T({1}, 0.0)).item(), 0.5);
}

TEST(Elementwise, NonFiniteForwardIsHardError) {
  T x({2}, std::vector<double>{1.0, std::numeric_limits<double>::infinity()});
  EXPECT_THROW(ad::relu(x), ad::NumericError);
  EXPECT_THROW(ad::log(T({1}, 0.0)), ad::NumericError);
}

TEST(Concat, ShapesAndExactGradientSplit) {
  ssr::Rng rng(9);
  T a({2, 3}), b({2, 5});
  for (auto* t : {&a, &b}) {
    for (auto& v : t->data()) v = rng.uniform(-1, 1);
    t->set_requires_grad(true);
  }
  auto c = ad::concat<double>({a, b}, 1);
  ASSERT_EQ(c.shape(), (Shape{2, 8}));
  T w({2, 8});
  for (auto& v : w.data()) v = rng.uniform(-1, 1);
  auto cw = ad::mul(c, w);
  ad::backward(ad::sum(cw));
  // Gradient of each branch equals the matching slice of the weights.
  auto wa = ad::slice(w, 1, 0, 3), wb = ad::slice(w, 1, 3, 5);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.grad()[i], wa[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(b.grad()[i], wb[i]);
}

TEST(Concat, MismatchedOtherDimIsError) {
  EXPECT_THROW(ad::concat<double>({T({2, 3}), T({3, 3})}, 1), ad::ShapeError);
}

TEST(Concat, BackwardThenSliceRecoversBranchGradients) {
  // Upstream gradient of the concat output, sliced back, equals each branch.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ssr::Rng rng(seed);
    T a({3, 2, 4}), b({3, 1, 4}), c({3, 3, 4});
    for (auto* t : {&a, &b, &c}) {
      for (auto& v : t->data()) v = rng.uniform(-1, 1);
      t->set_requires_grad(true);
    }
    auto cat = ad::concat<double>({a, b, c}, 1);
    auto head = ad::square(cat);
    ad::backward(ad::sum(head));
    std::size_t off = 0;
    for (auto* t : {&a, &b, &c}) {
      T expected = ad::slice(ad::scale(cat, 2.0), 1, off, t->dim(1));
      for (std::size_t i = 0; i < t->numel(); ++i) EXPECT_EQ(t->grad()[i], expected[i]);
      off += t->dim(1);
    }
  }
}

TEST(MinReduce, GradientGoesToArgminWithLowestIndexTies) {
  T x({2, 4}, std::vector<double>{3, 1, 1, 2, 5, 4, 6, 4});
  x.set_requires_grad(true);
  auto m = ad::min_reduce(x, 1);
  ASSERT_EQ(m.shape(), (Shape{2}));
  EXPECT_EQ(m[0], 1.0);
  EXPECT_EQ(m[1], 4.0);
  ad::backward(ad::sum(m));
  std::vector<double> expected{0, 1, 0, 0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(x.grad()[i], expected[i]);
}

TEST(MinReduce, GradientCheckWithUniqueMinimum) {
  auto fn = [](const std::vector<T>& in) { return ad::min_reduce(in[0], 0); };
  EXPECT_LT(ad::check_gradients(fn, {{{9}}}, 4), 1e-4);
}

TEST(CheckGradients, ReferenceCases) {
  auto lin = [](const std::vector<T>& in) { return ad::linear(in[0], in[1], in[2]); };
  EXPECT_LT(ad::check_gradients(lin, {{{3, 5}}, {{4, 5}}, {{4}}}, 0), 1e-6);

  auto rl = [](const std::vector<T>& in) { return ad::relu(in[0]); };
  EXPECT_LT(ad::check_gradients(rl, {{{20}, -1, 1, 0.1}}, 0), 1e-6);

  auto sig3 = [](const std::vector<T>& in) {
    return ad::sigmoid(ad::sigmoid(ad::sigmoid(in[0])));
  };
  EXPECT_LT(ad::check_gradients(sig3, {{{12}}}, 0), 1e-4);
}

TEST(CheckGradients, RemainingElementwiseAndShapeOps) {
  std::vector<std::pair<const char*, ad::GradFn>> fns = {
      {"square", [](const std::vector<T>& in) { return ad::square(in[0]); }},
      {"sub", [](const std::vector<T>& in) { return ad::sub(in[0], in[1]); }},
      {"mul", [](const std::vector<T>& in) { return ad::mul(in[0], in[1]); }},
      {"mean", [](const std::vector<T>& in) { return ad::mean(ad::mul(in[0], in[1])); }},
      {"reshape", [](const std::vector<T>& in) { return ad::reshape(ad::mul(in[0], in[1]), {3, 4}); }},
      {"pairwise", [](const std::vector<T>& in) {
         return ad::pairwise_sq_distances(ad::reshape(in[0], {4, 3}), ad::reshape(in[1], {4, 3}));
       }},
      {"pad+crop", [](const std::vector<T>& in) {
         auto x = ad::reshape(ad::add(in[0], in[1]), {1, 1, 3, 4});
         return ad::crop2d(ad::pad_reflect2d(x, 3, 2), 5, 5);
       }},
  };
  for (const auto& [name, fn] : fns)
    EXPECT_LT(ad::check_gradients(fn, {{{12}}, {{12}}}, 1), 1e-4) << name;
  auto lg = [](const std::vector<T>& in) { return ad::log(in[0]); };
  EXPECT_LT(ad::check_gradients(lg, {{{8}, 0.2, 2.0}}, 1), 1e-4);
}

TEST(Graph, BackwardVisitsReverseTopologicalOrder) {
  T x({2}, 1.0);
  x.set_requires_grad(true);
  auto a = ad::square(x);
  auto b = ad::scale(a, 3.0);
  auto c = ad::add(a, b);
  auto loss = ad::sum(c);
  std::vector<const ad::Node<double>*> visited;
  ad::backward<double>(loss, [&](const ad::Node<double>& n) { visited.push_back(&n); });
  // Every node must be visited after all of its consumers.
  auto pos = [&](const T& t) {
    return std::find(visited.begin(), visited.end(), t.node()) - visited.begin();
  };
  EXPECT_LT(pos(loss), pos(c));
  EXPECT_LT(pos(c), pos(b));
  EXPECT_LT(pos(b), pos(a));
  EXPECT_LT(pos(a), pos(x));
  EXPECT_EQ(x.grad()[0], 8.0);  // d/dx (x^2 + 3x^2) = 8x
}

TEST(Graph, ForwardIsDeterministic) {
  ssr::Rng rng(1);
  T x({2, 3, 6, 6}), w({4, 3, 3, 3}), b({4});
  for (auto* t : {&x, &w, &b})
    for (auto& v : t->data()) v = rng.uniform(-1, 1);
  auto y1 = ad::relu(ad::conv2d(x, w, b, 1, 1));
  auto y2 = ad::relu(ad::conv2d(x, w, b, 1, 1));
  EXPECT_EQ(std::memcmp(y1.raw(), y2.raw(), y1.numel() * sizeof(double)), 0);
}

TEST(Registry, RejectsDuplicateNamesAndTensors) {
  ad::ParameterRegistry<double> reg;
  T w({2, 2});
  reg.add("w", w);
  EXPECT_THROW(reg.add("w", T({1})), std::invalid_argument);
  EXPECT_THROW(reg.add("w2", w), std::invalid_argument);
  EXPECT_TRUE(reg.at("w").requires_grad());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ssr::Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    ad::Checkpoint ck;
    ck.header["task"] = "volume";
    ck.header["scale"] = "desk";
    for (int r = 0; r < 4; ++r) {
      Shape s;
      for (std::size_t d = 0, rank = 1 + rng.index(4); d < rank; ++d) s.push_back(1 + rng.index(4));
      ad::Checkpoint::Record rec{"layer" + std::to_string(r) + ".w", s, {}};
      for (std::size_t i = 0; i < ad::numel_of(s); ++i) rec.data.push_back(float(rng.normal()));
      ck.records.push_back(rec);
    }
    const auto bytes = ad::encode_checkpoint(ck);
    ASSERT_EQ(bytes.substr(0, 4), "SSCK");
    const auto back = ad::decode_checkpoint(bytes);
    EXPECT_EQ(back.header, ck.header);
    ASSERT_EQ(back.records.size(), ck.records.size());
    for (std::size_t r = 0; r < ck.records.size(); ++r) {
      EXPECT_EQ(back.records[r].name, ck.records[r].name);
      EXPECT_EQ(back.records[r].shape, ck.records[r].shape);
      EXPECT_EQ(std::memcmp(back.records[r].data.data(), ck.records[r].data.data(),
                            ck.records[r].data.size() * sizeof(float)),
                0);
    }
    EXPECT_EQ(ad::encode_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  EXPECT_THROW(ad::decode_checkpoint("XXXX\x01\0\0\0"), ad::FormatError);
  ad::Checkpoint ck;
  ck.records.push_back({"a", {3}, {1.f, 2.f, 3.f}});
  auto bytes = ad::encode_checkpoint(ck);
  bytes.pop_back();
  EXPECT_THROW(ad::decode_checkpoint(bytes), ad::FormatError);
}
