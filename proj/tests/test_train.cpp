#include <gtest/gtest.h>

#include <sstream>

#include "ssr/train/harness.hpp"

namespace ad = ssr::ad;
namespace tr = ssr::train;
namespace nets = ssr::nets;

namespace {

tr::Dataset tiny_dataset(std::size_t count = 4, int voxel_res = 4) {
  ssr::scene::DatasetConfig dc;
  dc.count = count;
  dc.seed = 3;
  dc.camera.image_width_px = 16;
  dc.camera.image_height_px = 16;
  dc.voxel_resolution = voxel_res;
  dc.n_gt = 256;
  tr::Dataset d;
  for (std::size_t i = 0; i < count; ++i) {
    d.samples.push_back(ssr::scene::make_sample(dc, i));
    d.names.push_back(ssr::scene::sample_name(i));
  }
  return d;
}

const tr::Dataset& shared_data() {
  static const tr::Dataset d = tiny_dataset();
  return d;
}

tr::TrainPlan tiny_plan(nets::Task task, tr::Stage stage, std::size_t epochs = 6) {
  tr::TrainPlan p;
  p.task = task;
  p.stage = stage;
  p.epochs = epochs;
  p.batch = 3;
  p.lr = 1e-3;
  p.train_points = 64;
  p.seed = 5;
  return p;
}

const ad::Checkpoint& pretrained() {
  static const ad::Checkpoint ck = [] {
    auto plan = tiny_plan(nets::Task::disparity, tr::Stage::disp_pretrain, 4);
    auto st = tr::train(plan, nets::ScaleConfig::tiny(), shared_data());
    return tr::make_checkpoint(plan, st);
  }();
  return ck;
}

std::string bytes(const ad::Checkpoint& ck) { return ad::encode_checkpoint(ck); }

}  // namespace

TEST(Adam, MatchesClosedFormScalarReference) {
  ad::ParameterRegistry<double> reg;
  auto w = reg.add("w", ad::Tensor<double>({1}, 0.25));
  tr::AdamState<double> s;
  s.lr = 0.1;
  const double grads[5] = {1.0, -2.0, 0.5, 3.0, -0.25};
  double p = 0.25, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    w.mutable_grad()[0] = grads[t - 1];
    tr::adam_step(reg, s);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    p -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(w[0], p, 1e-12) << t;
  }
  EXPECT_EQ(s.step, 5u);
}

TEST(Adam, FirstStepIsMinusLearningRateTimesSign) {
  ad::ParameterRegistry<double> reg;
  auto w = reg.add("w", ad::Tensor<double>({2}, 1.0));
  tr::AdamState<double> s;
  s.lr = 0.1;
  w.mutable_grad()[0] = 1.0;
  w.mutable_grad()[1] = -7.0;
  tr::adam_step(reg, s);
  EXPECT_NEAR(w[0], 0.9, 1e-8);
  EXPECT_NEAR(w[1], 1.1, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  ad::ParameterRegistry<float> reg;
  auto w = reg.add("w", ad::Tensor<float>({3}, 0.5f));
  tr::AdamState<float> s;
  tr::adam_step(reg, s);
  w.mutable_grad();
  tr::adam_step(reg, s);
  EXPECT_EQ(s.step, 2u);
  for (float v : w.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ad::ParameterRegistry<float> reg;
  reg.add("good", ad::Tensor<float>({1}));
  auto bad = reg.add("layer.bad", ad::Tensor<float>({2}));
  bad.mutable_grad()[1] = std::numeric_limits<float>::quiet_NaN();
  tr::AdamState<float> s;
  try {
    tr::adam_step(reg, s);
    FAIL() << "expected NumericError";
  } catch (const ad::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.bad"), std::string::npos);
  }
}

TEST(Adam, FrozenPrefixesAndCheckpointRoundTrip) {
  ad::ParameterRegistry<float> reg;
  auto a = reg.add("dispnet.w", ad::Tensor<float>({2}, 1.f));
  auto b = reg.add("encoder.w", ad::Tensor<float>({2}, 1.f));
  a.mutable_grad()[0] = 1;
  b.mutable_grad()[0] = 1;
  tr::AdamState<float> s;
  tr::adam_step(reg, s, {"dispnet."});
  EXPECT_EQ(a[0], 1.f);
  EXPECT_NE(b[0], 1.f);
  ad::Checkpoint ck;
  tr::append_adam(ck, reg, s);
  tr::AdamState<float> back;
  ASSERT_TRUE(tr::load_adam(ad::decode_checkpoint(ad::encode_checkpoint(ck)), reg, back));
  EXPECT_EQ(back.step, s.step);
  EXPECT_EQ(back.m, s.m);
  EXPECT_EQ(back.v, s.v);
}

TEST(TrainPlan, ValidationAndDecay) {
  auto p = tiny_plan(nets::Task::volume, tr::Stage::rec_train, 10);
  EXPECT_EQ(p.decay_at(), 6u);
  EXPECT_EQ(p.lr_at_epoch(5), 1e-3);
  EXPECT_EQ(p.lr_at_epoch(6), 5e-4);
  p.decay_epoch = 10;
  EXPECT_THROW(p.validate(), nets::ConfigError);
  p = tiny_plan(nets::Task::disparity, tr::Stage::rec_train);
  EXPECT_THROW(p.validate(), nets::ConfigError);
  p = tiny_plan(nets::Task::volume, tr::Stage::joint_finetune);
  p.disp_source = tr::DispSource::sgbm;
  EXPECT_THROW(p.validate(), nets::ConfigError);
  EXPECT_FALSE(tr::parse_stage("warmup"));
  EXPECT_EQ(tr::parse_stage("rec-train"), tr::Stage::rec_train);
}

TEST(Train, LossCurveDecreasesAndLrHalvesAtDecayEpoch) {
  auto plan = tiny_plan(nets::Task::volume, tr::Stage::rec_train, 40);
  plan.disp_source = tr::DispSource::groundtruth;
  auto st = tr::train(plan, nets::ScaleConfig::tiny(), shared_data());
  ASSERT_EQ(st.curve.size(), 80u);  // 4 samples, batch 3 -> 2 steps per epoch
  auto window_mean = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 20; ++i) s += st.curve[i].loss;
    return s / 20;
  };
  EXPECT_LT(window_mean(60), window_mean(0));
  for (const auto& r : st.curve) EXPECT_EQ(r.lr, r.step <= 2 * plan.decay_at() ? 1e-3 : 5e-4) << r.step;
  std::ostringstream os;
  tr::write_curve_header(os);
  tr::write_curve_row(os, st.curve[0]);
  EXPECT_EQ(os.str().substr(0, 19), "step\tstage\tloss\tlr\n");
  EXPECT_EQ(os.str().substr(19, 12), "1\trec-train\t");
}

TEST(Train, IdenticalRunsAreBitIdentical) {
  auto plan = tiny_plan(nets::Task::point, tr::Stage::rec_train, 3);
  auto a = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained());
  auto b = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained());
  EXPECT_EQ(bytes(tr::make_checkpoint(plan, a)), bytes(tr::make_checkpoint(plan, b)));
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  for (auto stage : {tr::Stage::rec_train, tr::Stage::joint_finetune}) {
    auto plan = tiny_plan(nets::Task::volume, stage, 6);
    plan.checkpoint_every = 2;
    std::vector<std::size_t> saved_at;
    tr::TrainHooks full_hooks;
    full_hooks.on_checkpoint = [&](const ad::Checkpoint&, std::size_t e) { saved_at.push_back(e); };
    auto full = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained(), nullptr, full_hooks);
    EXPECT_EQ(saved_at, (std::vector<std::size_t>{2, 4, 6}));

    ad::Checkpoint partial;
    tr::TrainHooks hooks;
    hooks.stop_after_epoch = 3;
    hooks.on_checkpoint = [&](const ad::Checkpoint& ck, std::size_t) { partial = ad::decode_checkpoint(bytes(ck)); };
    auto first = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained(), nullptr, hooks);
    EXPECT_EQ(first.epochs_done, 3u);
    auto resumed = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), nullptr, &partial);
    EXPECT_EQ(resumed.curve.front().step, first.curve.back().step + 1);
    EXPECT_EQ(bytes(tr::make_checkpoint(plan, resumed)), bytes(tr::make_checkpoint(plan, full)));

    auto other = plan;
    other.lr = 2e-3;
    EXPECT_THROW(tr::train(other, nets::ScaleConfig::tiny(), shared_data(), nullptr, &partial), nets::ConfigError);
  }
}

TEST(Train, RecTrainLeavesDispNetBitIdentical) {
  auto plan = tiny_plan(nets::Task::volume, tr::Stage::rec_train, 3);
  auto st = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained());
  std::size_t checked = 0;
  for (const auto& e : st.model.registry().parameters()) {
    if (e.name.rfind("dispnet.", 0) != 0) continue;
    const auto* rec = pretrained().find(e.name);
    ASSERT_NE(rec, nullptr) << e.name;
    for (std::size_t i = 0; i < rec->data.size(); ++i) ASSERT_EQ(e.tensor[i], rec->data[i]) << e.name;
    ++checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(Train, PretrainOnlyMovesDispNet) {
  auto plan = tiny_plan(nets::Task::volume, tr::Stage::disp_pretrain, 2);
  auto st = tr::train(plan, nets::ScaleConfig::tiny(), shared_data());
  nets::Pipeline<float> fresh(nets::ScaleConfig::tiny(), tr::model_options(plan), plan.seed);
  const auto& a = st.model.registry().parameters();
  const auto& b = fresh.registry().parameters();
  bool dispnet_moved = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool same = std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin());
    if (a[i].name.rfind("dispnet.", 0) == 0)
      dispnet_moved = dispnet_moved || !same;
    else
      EXPECT_TRUE(same) << a[i].name;
  }
  EXPECT_TRUE(dispnet_moved);
}

TEST(Train, MismatchesFailBeforeFirstStep) {
  std::size_t steps = 0;
  tr::TrainHooks hooks;
  hooks.on_step = [&](const tr::CurveRow&) { ++steps; };
  auto plan = tiny_plan(nets::Task::volume, tr::Stage::rec_train);
  plan.disp_source = tr::DispSource::groundtruth;
  EXPECT_THROW(tr::train(plan, nets::ScaleConfig::desk(), shared_data(), nullptr, nullptr, hooks), ssr::DataError);
  const auto coarse = tiny_dataset(2, 8);
  EXPECT_THROW(tr::train(plan, nets::ScaleConfig::tiny(), coarse, nullptr, nullptr, hooks), ssr::DataError);
  plan.disp_source = tr::DispSource::dispnetb;
  EXPECT_THROW(tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), nullptr, nullptr, hooks), nets::ConfigError);
  EXPECT_EQ(steps, 0u);
}

TEST(Evaluate, ReportsAndErrors) {
  auto plan = tiny_plan(nets::Task::volume, tr::Stage::rec_train, 2);
  auto st = tr::train(plan, nets::ScaleConfig::tiny(), shared_data(), &pretrained());
  tr::EvalOptions opt;
  opt.metrics = {"iou", "epe"};
  auto reps = tr::evaluate(st.model, shared_data(), opt);
  ASSERT_EQ(reps.size(), 2u);
  EXPECT_EQ(reps[0].count(), 4u);
  for (double v : reps[0].values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  opt.source = tr::DispSource::groundtruth;
  EXPECT_EQ(tr::evaluate(st.model, shared_data(), opt)[1].mean(), 0.0);
  opt.metrics = {"fscore"};
  EXPECT_THROW(tr::evaluate(st.model, shared_data(), opt), nets::ConfigError);
  opt.metrics = {"cd"};
  EXPECT_THROW(tr::evaluate(st.model, shared_data(), opt), nets::ConfigError);
  // Reloading the checkpoint gives the same numbers.
  auto model = tr::load_model(ad::decode_checkpoint(bytes(tr::make_checkpoint(plan, st))));
  opt.metrics = {"iou"};
  EXPECT_EQ(tr::evaluate(model, shared_data(), opt)[0].values, tr::evaluate(st.model, shared_data(), opt)[0].values);
}

TEST(Harness, AblationAndSwapAreCompleteAndDeterministic) {
  tr::HarnessBudget b;
  b.disp_epochs = 2;
  b.rec_epochs = 2;
  b.batch = 2;
  b.lr = 1e-3;
  b.train_points = 32;
  const auto cfg = nets::ScaleConfig::tiny();
  auto rows = tr::run_ablation_suite(shared_data(), cfg, 9, b);
  ASSERT_EQ(rows.size(), 4u);
  std::ostringstream a1, a2;
  tr::write_ablation_tsv(a1, rows);
  tr::write_ablation_tsv(a2, tr::run_ablation_suite(shared_data(), cfg, 9, b));
  const std::string table = a1.str();
  EXPECT_EQ(table, a2.str());
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);

  const std::vector<tr::DispSource> sources{tr::DispSource::dispnetb, tr::DispSource::sgbm,
                                            tr::DispSource::groundtruth};
  auto swap = tr::run_disparity_swap(shared_data(), cfg, 9, sources, b);
  ASSERT_EQ(swap.size(), 3u);
  EXPECT_EQ(swap[2].epe, 0.0);
  std::ostringstream s1, s2;
  tr::write_swap_tsv(s1, swap);
  tr::write_swap_tsv(s2, tr::run_disparity_swap(shared_data(), cfg, 9, sources, b));
  EXPECT_EQ(s1.str(), s2.str());
}
