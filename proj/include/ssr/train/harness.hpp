#pragma once

#include <ostream>

#include "ssr/train/trainer.hpp"

namespace ssr::train {

/// Training budget shared by every run of a harness.
struct HarnessBudget {
  std::size_t disp_epochs = 200;
  std::size_t rec_epochs = 200;
  std::size_t batch = 4;
  double lr = 1e-4;
  std::size_t train_points = 2048;
};

/// DispNet-B trained on ground-truth disparities with the harness budget.
inline ad::Checkpoint pretrain_dispnet(const Dataset& data, const nets::ScaleConfig& cfg, std::uint64_t seed,
                                       const HarnessBudget& b) {
  TrainPlan plan;
  plan.task = Task::disparity;
  plan.stage = Stage::disp_pretrain;
  plan.epochs = b.disp_epochs;
  plan.batch = b.batch;
  plan.lr = b.lr;
  plan.seed = seed;
  auto st = train(plan, cfg, data);
  return make_checkpoint(plan, st);
}

inline TrainPlan rec_plan(Task task, bool use_disp, bool use_corr, DispSource source, std::uint64_t seed,
                          const HarnessBudget& b) {
  TrainPlan plan;
  plan.task = task;
  plan.stage = Stage::rec_train;
  plan.epochs = b.rec_epochs;
  plan.batch = b.batch;
  plan.lr = b.lr;
  plan.use_disp = use_disp;
  plan.use_corr = use_corr;
  plan.disp_source = source;
  plan.train_points = b.train_points;
  plan.seed = seed;
  return plan;
}

struct AblationRow {
  std::string config;
  bool use_disp = true, use_corr = true;
  double iou = 0;     // volume task, training-set mean
  double cd_e3 = 0;   // point task, training-set mean, x1e3
};

/// Trains and evaluates {+-DispNet-B} x {+-CorrNet} for both tasks with the
/// same seed and budget. `dispnet` may carry a pretrained DispNet-B;
/// otherwise one is trained first.
inline std::vector<AblationRow> run_ablation_suite(const Dataset& data, const nets::ScaleConfig& cfg,
                                                   std::uint64_t seed, const HarnessBudget& b,
                                                   const ad::Checkpoint* dispnet = nullptr) {
  std::optional<ad::Checkpoint> own;
  if (!dispnet) {
    own = pretrain_dispnet(data, cfg, seed, b);
    dispnet = &*own;
  }
  const std::pair<const char*, std::pair<bool, bool>> configs[] = {
      {"full", {true, true}}, {"no-corrnet", {true, false}}, {"no-dispnet", {false, true}}, {"neither", {false, false}}};
  std::vector<AblationRow> rows;
  for (const auto& [name, flags] : configs) {
    AblationRow row{name, flags.first, flags.second};
    for (auto task : {Task::volume, Task::point}) {
      const auto plan = rec_plan(task, flags.first, flags.second, DispSource::dispnetb, seed, b);
      const auto st = train(plan, cfg, data, flags.first ? dispnet : nullptr);
      EvalOptions opt;
      opt.metrics = {task == Task::volume ? "iou" : "cd"};
      const double v = evaluate(st.model, data, opt).at(0).mean();
      (task == Task::volume ? row.iou : row.cd_e3) = v;
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_ablation_tsv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "config\tdispnet\tcorrnet\tiou\tcd_x1e3\n";
  for (const auto& r : rows)
    os << r.config << '\t' << int(r.use_disp) << '\t' << int(r.use_corr) << '\t' << io::format_real(r.iou) << '\t'
       << io::format_real(r.cd_e3) << '\n';
}

struct SwapRow {
  DispSource source = DispSource::dispnetb;
  double epe = 0;    // of the source itself
  double iou = 0;
  double cd_e3 = 0;
};

/// Reconstruction networks (volume and point) are trained once on
/// `train_source` disparities, frozen, then evaluated on the training set
/// with each disparity source in turn.
inline std::vector<SwapRow> run_disparity_swap(const Dataset& data, const nets::ScaleConfig& cfg, std::uint64_t seed,
                                               const std::vector<DispSource>& sources, const HarnessBudget& b,
                                               const ad::Checkpoint* dispnet = nullptr,
                                               DispSource train_source = DispSource::groundtruth) {
  if (sources.empty()) throw nets::ConfigError("disparity swap: no sources given");
  std::optional<ad::Checkpoint> own;
  if (!dispnet) {
    own = pretrain_dispnet(data, cfg, seed, b);
    dispnet = &*own;
  }
  auto vol = train(rec_plan(Task::volume, true, true, train_source, seed, b), cfg, data, dispnet);
  auto pts = train(rec_plan(Task::point, true, true, train_source, seed, b), cfg, data, dispnet);
  std::vector<SwapRow> rows;
  for (auto src : sources) {
    SwapRow row{src};
    EvalOptions opt;
    opt.source = src;
    opt.metrics = {"iou", "epe"};
    const auto v = evaluate(vol.model, data, opt);
    row.iou = v.at(0).mean();
    row.epe = v.at(1).mean();
    opt.metrics = {"cd"};
    row.cd_e3 = evaluate(pts.model, data, opt).at(0).mean();
    rows.push_back(row);
  }
  return rows;
}

inline void write_swap_tsv(std::ostream& os, const std::vector<SwapRow>& rows) {
  os << "source\tepe\tiou\tcd_x1e3\n";
  for (const auto& r : rows)
    os << to_string(r.source) << '\t' << io::format_real(r.epe) << '\t' << io::format_real(r.iou) << '\t'
       << io::format_real(r.cd_e3) << '\n';
}

}  // namespace ssr::train
