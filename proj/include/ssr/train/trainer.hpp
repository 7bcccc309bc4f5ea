#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>

#include "ssr/metrics/losses.hpp"
#include "ssr/metrics/metrics.hpp"
#include "ssr/nets/pipeline.hpp"
#include "ssr/train/adam.hpp"
#include "ssr/train/data.hpp"

namespace ssr::train {

using nets::Pipeline;
using nets::Task;
using Model = Pipeline<float>;

enum class Stage { disp_pretrain, rec_train, joint_finetune };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::disp_pretrain: return "disp-pretrain";
    case Stage::rec_train: return "rec-train";
    case Stage::joint_finetune: return "joint-finetune";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(const std::string& s) {
  for (auto v : {Stage::disp_pretrain, Stage::rec_train, Stage::joint_finetune})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

struct TrainPlan {
  Task task = Task::volume;
  Stage stage = Stage::rec_train;
  std::size_t epochs = 100;
  std::size_t batch = 4;
  double lr = 1e-4;
  double decay_factor = 0.5;
  std::optional<std::size_t> decay_epoch;  // default: 60% of epochs
  bool use_disp = true;
  bool use_corr = true;
  DispSource disp_source = DispSource::dispnetb;
  std::size_t checkpoint_every = 0;  // epochs; 0 = only at the end
  double joint_weight = 0.1;         // disparity loss weight in joint-finetune
  std::size_t train_points = 2048;   // ground-truth points per sample in the training chamfer
  std::uint64_t seed = 1;

  std::size_t decay_at() const { return decay_epoch ? *decay_epoch : (epochs * 3) / 5; }

  double lr_at_epoch(std::size_t epoch) const { return epoch >= decay_at() ? lr * decay_factor : lr; }

  void validate() const {
    if (epochs == 0) throw nets::ConfigError("plan: epochs must be positive");
    if (batch == 0) throw nets::ConfigError("plan: batch must be positive");
    if (!(lr > 0)) throw nets::ConfigError("plan: learning rate must be positive");
    if (decay_at() >= epochs) throw nets::ConfigError("plan: decay epoch must be before the last epoch");
    if (stage != Stage::disp_pretrain && task == Task::disparity)
      throw nets::ConfigError("plan: stage " + std::string(to_string(stage)) + " needs task volume or point");
    if (stage == Stage::joint_finetune && (!use_disp || disp_source != DispSource::dispnetb))
      throw nets::ConfigError("plan: joint-finetune trains DispNet-B, so it needs --disp-source dispnetb");
    if (stage == Stage::disp_pretrain && !use_disp && task != Task::disparity)
      throw nets::ConfigError("plan: disp-pretrain with --no-disp has nothing to train");
    if (train_points == 0) throw nets::ConfigError("plan: train_points must be positive");
  }

  std::map<std::string, std::string> header() const {
    std::map<std::string, std::string> h;
    h["train.task"] = nets::to_string(task);
    h["train.stage"] = to_string(stage);
    h["train.epochs"] = std::to_string(epochs);
    h["train.batch"] = std::to_string(batch);
    h["train.lr"] = io::format_real(lr);
    h["train.decay_factor"] = io::format_real(decay_factor);
    h["train.decay_epoch"] = std::to_string(decay_at());
    h["train.disp_source"] = to_string(disp_source);
    h["train.joint_weight"] = io::format_real(joint_weight);
    h["train.train_points"] = std::to_string(train_points);
    h["train.seed"] = std::to_string(seed);
    return h;
  }
};

struct CurveRow {
  std::uint64_t step = 0;
  Stage stage = Stage::rec_train;
  double loss = 0;
  double lr = 0;
};

inline void write_curve_header(std::ostream& os) { os << "step\tstage\tloss\tlr\n"; }

inline void write_curve_row(std::ostream& os, const CurveRow& r) {
  os << r.step << '\t' << to_string(r.stage) << '\t' << io::format_real(r.loss) << '\t' << io::format_real(r.lr)
     << '\n';
}

/// Model, optimizer and progress of a (possibly partial) training run.
struct TrainState {
  Model model;
  AdamState<float> adam;
  std::size_t epochs_done = 0;
  std::vector<CurveRow> curve;
};

struct TrainHooks {
  std::function<void(const CurveRow&)> on_step;
  /// Called every `checkpoint_every` epochs and after the last one.
  std::function<void(const ad::Checkpoint&, std::size_t epoch)> on_checkpoint;
  /// Stop (as if interrupted) once this many epochs are done; 0 = never.
  std::size_t stop_after_epoch = 0;
};

inline nets::PipelineOptions model_options(const TrainPlan& plan) { return {plan.task, plan.use_disp, plan.use_corr}; }

inline ad::Checkpoint make_checkpoint(const TrainPlan& plan, const TrainState& st) {
  ad::Checkpoint ck;
  ck.header = st.model.header();
  for (const auto& [k, v] : plan.header()) ck.header[k] = v;
  ck.header["train.epochs_done"] = std::to_string(st.epochs_done);
  ad::append_registry(ck, st.model.registry());
  append_adam(ck, st.model.registry(), st.adam);
  return ck;
}

/// Per-sample [2,H,W] disparities from `source`. DispNet-B runs one sample
/// at a time without recording gradients.
inline std::vector<std::vector<float>> source_disparities(const Model& model, const Dataset& data, DispSource source) {
  switch (source) {
    case DispSource::groundtruth: return ground_truth_disparities(data);
    case DispSource::sgbm: return sgbm_disparities(data, model.config());
    case DispSource::dispnetb: break;
  }
  if (!model.has_dispnet()) throw nets::ConfigError("disparity source dispnetb needs a model with DispNet-B");
  ad::NoGradGuard guard;
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto d = model.disparity(image_batch(data, {i}, false), image_batch(data, {i}, true));
    out.emplace_back(d.data().begin(), d.data().end());
  }
  return out;
}

namespace detail {

inline void check_resume_header(const ad::Checkpoint& ck, const std::map<std::string, std::string>& expect) {
  for (const auto& [k, v] : expect) {
    auto it = ck.header.find(k);
    if (it == ck.header.end() || it->second != v)
      throw nets::ConfigError("resume: checkpoint has " + k + "=" + (it == ck.header.end() ? "<missing>" : it->second) +
                              ", run expects " + v);
  }
}

/// Copies the dispnet.* parameters of `init` into the model.
inline void load_dispnet(const ad::Checkpoint& init, Model& model) {
  ad::Checkpoint only;
  for (const auto& r : init.records)
    if (r.name.rfind("dispnet.", 0) == 0) only.records.push_back(r);
  for (const auto& e : model.registry().parameters())
    if (e.name.rfind("dispnet.", 0) == 0 && !only.find(e.name))
      throw ad::FormatError("init checkpoint lacks DispNet-B parameter " + e.name);
  ad::load_registry(only, model.registry(), true);
}

inline std::vector<std::string> frozen_prefixes(Stage stage) {
  switch (stage) {
    case Stage::disp_pretrain: return {"encoder.", "corrnet.", "voxdec.", "ptdec."};
    case Stage::rec_train: return {"dispnet."};
    case Stage::joint_finetune: return {};
  }
  return {};
}

}  // namespace detail

/// Runs `plan` on `data`. `init` supplies pretrained DispNet-B weights;
/// `resume` continues an interrupted run of the same plan exactly.
inline TrainState train(const TrainPlan& plan, const nets::ScaleConfig& cfg, const Dataset& data,
                        const ad::Checkpoint* init = nullptr, const ad::Checkpoint* resume = nullptr,
                        const TrainHooks& hooks = {}) {
  plan.validate();
  cfg.validate();
  check_compatible(data, cfg, plan.task == Task::volume && plan.stage != Stage::disp_pretrain);
  TrainState st{Model(cfg, model_options(plan), plan.seed), {}, 0, {}};
  auto& reg = st.model.registry();
  st.adam.init(reg);
  if (resume) {
    auto expect = st.model.header();
    for (const auto& [k, v] : plan.header()) expect[k] = v;
    detail::check_resume_header(*resume, expect);
    ad::load_registry(*resume, reg);
    load_adam(*resume, reg, st.adam);
    auto it = resume->header.find("train.epochs_done");
    if (it == resume->header.end()) throw ad::FormatError("resume: checkpoint lacks train.epochs_done");
    st.epochs_done = std::stoull(it->second);
  } else if (init) {
    detail::load_dispnet(*init, st.model);
  } else if (plan.stage != Stage::disp_pretrain && plan.use_disp && plan.disp_source == DispSource::dispnetb) {
    throw nets::ConfigError("stage " + std::string(to_string(plan.stage)) +
                            " with DispNet-B disparities needs a pretrained DispNet-B (init checkpoint)");
  }

  const std::size_t N = data.size(), H = cfg.height, W = cfg.width;
  const auto gt_disp = ground_truth_disparities(data);
  std::vector<std::vector<float>> fed_disp;
  if (plan.stage == Stage::rec_train && plan.use_disp) fed_disp = source_disparities(st.model, data, plan.disp_source);
  std::vector<Tensor> point_targets;
  if (plan.task == Task::point)
    for (const auto& s : data.samples) point_targets.push_back(point_target(s, plan.train_points));
  const auto frozen = detail::frozen_prefixes(plan.stage);

  auto rec_loss = [&](const Tensor& out, const std::vector<std::size_t>& idx) {
    if (plan.task == Task::volume) return metrics::volume_loss(out, voxel_batch(data, idx));
    std::vector<Tensor> targets;
    for (auto i : idx) targets.push_back(point_targets[i]);
    return metrics::chamfer_loss(out, targets);
  };

  for (std::size_t epoch = st.epochs_done; epoch < plan.epochs; ++epoch) {
    st.adam.lr = plan.lr_at_epoch(epoch);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(plan.seed, epoch));
    for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < N; start += plan.batch) {
      const std::vector<std::size_t> idx(order.begin() + std::ptrdiff_t(start),
                                         order.begin() + std::ptrdiff_t(std::min(N, start + plan.batch)));
      const auto l = image_batch(data, idx, false), r = image_batch(data, idx, true);
      reg.zero_grad();
      Tensor loss;
      switch (plan.stage) {
        case Stage::disp_pretrain:
          loss = metrics::disparity_loss(st.model.disparity(l, r), disparity_batch(gt_disp, idx, H, W));
          break;
        case Stage::rec_train: {
          Tensor ext;
          if (plan.use_disp) ext = disparity_batch(fed_disp, idx, H, W);
          loss = rec_loss(st.model.forward(l, r, ad::Mode::train, plan.use_disp ? &ext : nullptr).output, idx);
          break;
        }
        case Stage::joint_finetune: {
          auto pred = st.model.forward(l, r, ad::Mode::train, nullptr, false);
          loss = ad::add(rec_loss(pred.output, idx),
                         ad::scale(metrics::disparity_loss(*pred.disparity, disparity_batch(gt_disp, idx, H, W)),
                                   float(plan.joint_weight)));
          break;
        }
      }
      const double value = loss.item();
      if (!std::isfinite(value))
        throw ad::NumericError("training loss became non-finite at step " + std::to_string(st.adam.step + 1));
      ad::backward(loss);
      adam_step(reg, st.adam, frozen);
      CurveRow row{st.adam.step, plan.stage, value, st.adam.lr};
      st.curve.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    }
    st.epochs_done = epoch + 1;
    const bool last = st.epochs_done == plan.epochs;
    const bool stop = hooks.stop_after_epoch && st.epochs_done >= hooks.stop_after_epoch;
    if (hooks.on_checkpoint &&
        (last || stop || (plan.checkpoint_every && st.epochs_done % plan.checkpoint_every == 0)))
      hooks.on_checkpoint(make_checkpoint(plan, st), st.epochs_done);
    if (stop) break;
  }
  return st;
}

/// Rebuilds a trained model from a checkpoint written by train().
inline Model load_model(const ad::Checkpoint& ck) {
  Model m = Model::from_header(ck.header);
  ad::load_registry(ck, m.registry());
  return m;
}

struct EvalOptions {
  std::vector<std::string> metrics{"iou", "cd", "epe"};
  double threshold = metrics::default_iou_threshold;
  DispSource source = DispSource::dispnetb;
};

/// Training-set style evaluation, one sample at a time in eval mode.
/// "cd" values are reported multiplied by 1e3. Metrics that do not apply to
/// the model's task are skipped when the metric list is the default one and
/// rejected otherwise.
inline std::vector<metrics::MetricReport> evaluate(const Model& model, const Dataset& data, const EvalOptions& opt,
                                                   bool skip_inapplicable = false) {
  const auto task = model.options().task;
  for (const auto& m : opt.metrics) {
    if (m != "iou" && m != "cd" && m != "epe") throw nets::ConfigError("unknown metric '" + m + "'");
    const bool ok = (m == "iou" && task == Task::volume) || (m == "cd" && task == Task::point) ||
                    (m == "epe" && (opt.source != DispSource::dispnetb || model.has_dispnet()));
    if (!ok && !skip_inapplicable)
      throw nets::ConfigError("metric '" + m + "' does not apply to a " + nets::to_string(task) + " model" +
                              (m == "epe" ? " without DispNet-B" : ""));
  }
  check_compatible(data, model.config(), task == Task::volume);
  ad::NoGradGuard guard;
  const bool needs_disp = model.has_dispnet() || opt.source != DispSource::dispnetb;
  std::vector<std::vector<float>> disp;
  if (needs_disp) disp = source_disparities(model, data, opt.source);
  const std::size_t H = model.config().height, W = model.config().width;
  std::vector<metrics::MetricReport> reports;
  for (const auto& m : opt.metrics) {
    const bool ok = (m == "iou" && task == Task::volume) || (m == "cd" && task == Task::point) ||
                    (m == "epe" && needs_disp);
    if (!ok) continue;
    metrics::MetricReport rep;
    rep.metric = m;
    if (m == "iou") rep.threshold = opt.threshold;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data.samples[i];
      double value = 0;
      if (m == "epe") {
        const auto excl = epe_exclusion(s);
        const auto gt = stack_disparity(s.disp_l, s.disp_r);
        value = metrics::epe<float, float>(disp[i], gt, excl);
      } else {
        const auto l = image_batch(data, {i}, false), r = image_batch(data, {i}, true);
        Tensor ext;
        if (model.options().use_disp) ext = disparity_batch(disp, {i}, H, W);
        const auto pred = model.forward(l, r, ad::Mode::eval, model.options().use_disp ? &ext : nullptr);
        if (m == "iou") {
          value = metrics::iou<float>(pred.output.data(), s.voxels.occupancy, opt.threshold);
        } else {
          std::vector<scene::Vec3> pts(pred.output.dim(1));
          for (std::size_t k = 0; k < pts.size(); ++k)
            pts[k] = {pred.output[3 * k], pred.output[3 * k + 1], pred.output[3 * k + 2]};
          value = 1e3 * metrics::chamfer(pts, s.points.points);
        }
      }
      rep.add(data.names[i], value, scene::to_string(s.kind));
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace ssr::train
