// ssr: dataset generation, training, evaluation, inference and self-test.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (including a failed self-test).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ssr/io/formats.hpp"
#include "ssr/parallel.hpp"
#include "ssr/selftest.hpp"
#include "ssr/train/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ssr;

enum Exit { ok = 0, usage = 1, data = 2, numeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

train::DispSource disp_source(const std::string& s) {
  auto v = train::parse_disp_source(s);
  if (!v) throw UsageError("unknown disparity source '" + s + "' (expected dispnetb, sgbm or groundtruth)");
  return *v;
}

/// Rows of an existing curve file with step <= `keep_through`, header first.
std::string curve_prefix(const fs::path& path, std::uint64_t keep_through) {
  std::ifstream in(path);
  std::ostringstream kept;
  train::write_curve_header(kept);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find('\t'))) > keep_through) break;
    kept << line << '\n';
  }
  return kept.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::detail::write_all(path, text);
}

// ---- gen ----

struct GenArgs {
  fs::path out;
  std::size_t count = 8;
  std::uint64_t seed = 1;
  std::size_t width = 137, height = 137;
  double focal_mm = 35, sensor_mm = 32, baseline_mm = 130;
  int voxel_res = 32;
  std::size_t n_gt = 16384;
  bool jitter = true;
  std::string resize = "rescale";
};

int cmd_gen(const GenArgs& a, unsigned threads) {
  scene::DatasetConfig cfg;
  cfg.count = a.count;
  cfg.seed = a.seed;
  cfg.camera.image_width_px = a.width;
  cfg.camera.image_height_px = a.height;
  cfg.camera.focal_length_mm = a.focal_mm;
  cfg.camera.sensor_width_mm = a.sensor_mm;
  cfg.camera.baseline_mm = a.baseline_mm;
  cfg.voxel_resolution = a.voxel_res;
  cfg.n_gt = a.n_gt;
  cfg.jitter = a.jitter;
  cfg.resize = a.resize == "crop" ? scene::ResizeMode::crop : scene::ResizeMode::rescale;
  cfg.threads = threads;
  try {
    cfg.camera.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto names = scene::generate_dataset(cfg, a.out);
  std::cerr << "wrote " << names.size() << " samples to " << a.out << "\n";
  return ok;
}

// ---- train ----

struct TrainArgs {
  std::string task, scale = "desk", stage, disp_source = "dispnetb";
  fs::path data, out, init, resume, curve;
  std::size_t epochs = 100, batch = 4, checkpoint_every = 0, train_points = 2048;
  std::optional<std::size_t> decay_epoch, stop_after;
  double lr = 1e-4, joint_weight = 0.1;
  std::uint64_t seed = 1;
  bool no_disp = false, no_corr = false;
};

int cmd_train(const TrainArgs& a) {
  const auto task = nets::parse_task(a.task);
  if (!task) throw UsageError("unknown task '" + a.task + "' (expected disparity, volume or point)");
  train::TrainPlan plan;
  plan.task = *task;
  if (a.stage.empty()) {
    plan.stage = *task == nets::Task::disparity ? train::Stage::disp_pretrain : train::Stage::rec_train;
  } else {
    auto st = train::parse_stage(a.stage);
    if (!st) throw UsageError("unknown stage '" + a.stage + "' (expected disp-pretrain, rec-train or joint-finetune)");
    plan.stage = *st;
  }
  plan.epochs = a.epochs;
  plan.batch = a.batch;
  plan.lr = a.lr;
  plan.decay_epoch = a.decay_epoch;
  plan.use_disp = !a.no_disp;
  plan.use_corr = !a.no_corr;
  plan.disp_source = disp_source(a.disp_source);
  plan.checkpoint_every = a.checkpoint_every;
  plan.joint_weight = a.joint_weight;
  plan.train_points = a.train_points;
  plan.seed = a.seed;
  plan.validate();
  const auto cfg = nets::ScaleConfig::preset(a.scale);

  const auto dataset = train::load_dataset(a.data);
  std::optional<ad::Checkpoint> init, resume;
  if (!a.init.empty()) init = ad::read_checkpoint(a.init);
  if (!a.resume.empty()) resume = ad::read_checkpoint(a.resume);

  const fs::path curve_path = a.curve.empty() ? fs::path(a.out.string() + ".curve.tsv") : a.curve;
  std::string prefix;
  if (resume) {
    const auto it = resume->header.find("adam.step");
    prefix = curve_prefix(curve_path, it == resume->header.end() ? 0 : std::stoull(it->second));
  } else {
    std::ostringstream h;
    train::write_curve_header(h);
    prefix = h.str();
  }
  if (curve_path.has_parent_path()) fs::create_directories(curve_path.parent_path());
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  io::detail::write_all(curve_path, prefix);
  std::ofstream curve(curve_path, std::ios::app);

  train::TrainHooks hooks;
  hooks.on_step = [&](const train::CurveRow& r) {
    train::write_curve_row(curve, r);
    curve.flush();
  };
  hooks.on_checkpoint = [&](const ad::Checkpoint& ck, std::size_t epoch) {
    ad::write_checkpoint(a.out, ck);
    std::cerr << "epoch " << epoch << ": checkpoint " << a.out << "\n";
  };
  hooks.stop_after_epoch = a.stop_after.value_or(0);
  const auto t0 = std::chrono::steady_clock::now();
  auto st = train::train(plan, cfg, dataset, init ? &*init : nullptr, resume ? &*resume : nullptr, hooks);
  ad::write_checkpoint(a.out, train::make_checkpoint(plan, st));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "trained " << st.epochs_done << " epochs (" << st.adam.step << " steps, " << std::fixed
            << std::setprecision(1) << secs << std::defaultfloat << " s); final loss " << (st.curve.empty() ? 0.0 : st.curve.back().loss) << "\n";
  return ok;
}

// ---- eval ----

struct EvalArgs {
  fs::path model, data, out;
  std::string metrics = "iou,cd,epe", disp_source = "dispnetb";
  double threshold = metrics::default_iou_threshold;
};

int cmd_eval(const EvalArgs& a) {
  train::EvalOptions opt;
  opt.metrics = split_list(a.metrics);
  if (opt.metrics.empty()) throw UsageError("--metrics is empty");
  opt.threshold = a.threshold;
  opt.source = disp_source(a.disp_source);
  const bool default_list = a.metrics == EvalArgs{}.metrics;
  const auto model = train::load_model(ad::read_checkpoint(a.model));
  const auto dataset = train::load_dataset(a.data);
  const auto reports = train::evaluate(model, dataset, opt, default_list);
  std::ostringstream os;
  metrics::write_report_tsv(os, reports);
  write_text(a.out, os.str());
  return ok;
}

// ---- infer ----

struct InferArgs {
  fs::path model, left, right, out;
  double threshold = metrics::default_iou_threshold;
};

train::Tensor image_tensor(const scene::RgbImage& img) {
  train::Tensor t({1, 3, img.height, img.width});
  float* o = t.raw();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) *o++ = img.at(x, y, c);
  return t;
}

/// Left image beside its disparity map, the latter scaled so `max_disparity`
/// is white.
scene::RgbImage montage(const scene::RgbImage& left, const scene::DisparityMap& disp, double max_disparity) {
  scene::RgbImage m(2 * left.width, left.height);
  for (std::size_t y = 0; y < left.height; ++y)
    for (std::size_t x = 0; x < left.width; ++x) {
      const float g = float(std::clamp(double(disp.at(x, y)) / max_disparity, 0.0, 1.0));
      for (std::size_t c = 0; c < 3; ++c) {
        m.at(x, y, c) = left.at(x, y, c);
        m.at(left.width + x, y, c) = g;
      }
    }
  return m;
}

int cmd_infer(const InferArgs& a) {
  const auto model = train::load_model(ad::read_checkpoint(a.model));
  const auto left = io::read_ppm(a.left), right = io::read_ppm(a.right);
  if (left.width != right.width || left.height != right.height)
    throw DataError("left image is " + std::to_string(left.width) + "x" + std::to_string(left.height) +
                    ", right image is " + std::to_string(right.width) + "x" + std::to_string(right.height));
  const auto& cfg = model.config();
  if (left.width != cfg.width || left.height != cfg.height)
    throw DataError("images are " + std::to_string(left.width) + "x" + std::to_string(left.height) + ", model '" +
                    cfg.name + "' expects " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  fs::create_directories(a.out);
  ad::NoGradGuard guard;
  const auto l = image_tensor(left), r = image_tensor(right);
  std::optional<train::Tensor> disp;
  if (model.has_dispnet()) disp = model.disparity(l, r);
  if (disp) {
    const std::size_t plane = cfg.width * cfg.height;
    scene::DisparityMap dl(cfg.width, cfg.height), dr(cfg.width, cfg.height);
    std::copy_n(disp->raw(), plane, dl.data.begin());
    std::copy_n(disp->raw() + plane, plane, dr.data.begin());
    io::write_ssdm(a.out / "disp_l.ssdm", dl);
    io::write_ssdm(a.out / "disp_r.ssdm", dr);
    io::write_ppm(a.out / "montage.ppm", montage(left, dl, cfg.max_disparity));
  } else {
    io::write_ppm(a.out / "montage.ppm", montage(left, scene::DisparityMap(cfg.width, cfg.height), 1.0));
  }
  const auto task = model.options().task;
  if (task == nets::Task::volume) {
    const auto pred = model.forward(l, r, ad::Mode::eval, disp ? &*disp : nullptr);
    scene::VoxelGrid grid(int(cfg.volume_res));
    for (std::size_t i = 0; i < grid.occupancy.size(); ++i) grid.occupancy[i] = double(pred.output[i]) > a.threshold;
    io::write_ssvx(a.out / "voxels.ssvx", grid);
    std::cerr << "occupied voxels: " << grid.count() << " of " << grid.occupancy.size() << "\n";
  } else if (task == nets::Task::point) {
    const auto pred = model.forward(l, r, ad::Mode::eval, disp ? &*disp : nullptr);
    scene::PointCloud cloud;
    for (std::size_t k = 0; k < pred.output.dim(1); ++k)
      cloud.points.push_back({pred.output[3 * k], pred.output[3 * k + 1], pred.output[3 * k + 2]});
    io::write_ply(a.out / "points.ply", cloud);
  }
  std::cerr << "wrote predictions to " << a.out << "\n";
  return ok;
}

// ---- selftest ----

struct SelftestArgs {
  bool inject_nan = false;
  std::size_t seeds = 10, geometry_samples = 50;
};

int cmd_selftest(const SelftestArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<selftest::CheckResult> all;
  for (auto part : {selftest::gradient_suite(a.seeds, a.inject_nan), selftest::metric_suite(),
                    selftest::cost_volume_suite(), selftest::geometry_suite(a.geometry_samples)})
    all.insert(all.end(), part.begin(), part.end());
  std::size_t failed = 0;
  for (const auto& r : all) {
    failed += !r.passed;
    std::printf("%-4s %-12s %-58s value=%-12.4g limit=%.4g%s%s\n", r.passed ? "ok" : "FAIL", r.suite.c_str(),
                r.name.c_str(), r.value, r.limit, r.detail.empty() ? "" : "  ", r.detail.c_str());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks, %zu failed, %.1f s\n", all.size(), failed, secs);
  return failed ? numeric : ok;
}

// ---- harnesses ----

struct HarnessArgs {
  fs::path data, out, init;
  std::string scale = "desk", sources = "dispnetb,sgbm,groundtruth", train_source = "groundtruth";
  std::uint64_t seed = 1;
  train::HarnessBudget budget;
};

int cmd_ablation(const HarnessArgs& a) {
  const auto cfg = nets::ScaleConfig::preset(a.scale);
  const auto dataset = train::load_dataset(a.data);
  std::optional<ad::Checkpoint> init;
  if (!a.init.empty()) init = ad::read_checkpoint(a.init);
  const auto rows = train::run_ablation_suite(dataset, cfg, a.seed, a.budget, init ? &*init : nullptr);
  std::ostringstream os;
  train::write_ablation_tsv(os, rows);
  write_text(a.out, os.str());
  return ok;
}

int cmd_swap(const HarnessArgs& a) {
  std::vector<train::DispSource> sources;
  for (const auto& s : split_list(a.sources)) sources.push_back(disp_source(s));
  const auto cfg = nets::ScaleConfig::preset(a.scale);
  const auto dataset = train::load_dataset(a.data);
  std::optional<ad::Checkpoint> init;
  if (!a.init.empty()) init = ad::read_checkpoint(a.init);
  const auto rows = train::run_disparity_swap(dataset, cfg, a.seed, sources, a.budget, init ? &*init : nullptr,
                                              disp_source(a.train_source));
  std::ostringstream os;
  train::write_swap_tsv(os, rows);
  write_text(a.out, os.str());
  return ok;
}

void add_budget(CLI::App* cmd, HarnessArgs& a) {
  cmd->add_option("--data", a.data, "Dataset root")->required();
  cmd->add_option("--out", a.out, "Output TSV (default stdout)");
  cmd->add_option("--scale", a.scale, "Scale preset: paper, desk, tiny")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Seed shared by every run")->capture_default_str();
  cmd->add_option("--init", a.init, "Pretrained DispNet-B checkpoint (trained on ground truth when absent)");
  cmd->add_option("--disp-epochs", a.budget.disp_epochs, "DispNet-B pretraining epochs")->capture_default_str();
  cmd->add_option("--rec-epochs", a.budget.rec_epochs, "Reconstruction training epochs")->capture_default_str();
  cmd->add_option("--batch", a.budget.batch, "Batch size")->capture_default_str();
  cmd->add_option("--lr", a.budget.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--train-points", a.budget.train_points, "Ground-truth points per sample in the training loss")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo-to-shape reconstruction: data generation, training, evaluation and inference"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: SSR_THREADS, else all cores); 1 is the reproducible mode")
      ->envname("SSR_THREADS")
      ->capture_default_str();

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic stereo dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Number of samples")->capture_default_str();
  g->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  g->add_option("--width", gen.width, "Image width in pixels")->capture_default_str();
  g->add_option("--height", gen.height, "Image height in pixels")->capture_default_str();
  g->add_option("--focal-mm", gen.focal_mm, "Focal length in mm")->capture_default_str();
  g->add_option("--sensor-mm", gen.sensor_mm, "Sensor width in mm")->capture_default_str();
  g->add_option("--baseline-mm", gen.baseline_mm, "Stereo baseline in mm")->capture_default_str();
  g->add_option("--voxel-res", gen.voxel_res, "Voxel grid resolution")->capture_default_str();
  g->add_option("--n-gt", gen.n_gt, "Ground-truth surface points per sample")->capture_default_str();
  g->add_flag("--jitter,!--no-jitter", gen.jitter, "Random lighting and albedo jitter")->capture_default_str();
  g->add_option("--resize", gen.resize, "Fit to the output size by rescale or crop")
      ->check(CLI::IsMember({"rescale", "crop"}))
      ->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one stage of a pipeline");
  t->add_option("--task", tr.task, "disparity, volume or point")->required();
  t->add_option("--data", tr.data, "Dataset root")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--scale", tr.scale, "Scale preset: paper, desk, tiny")->capture_default_str();
  t->add_option("--stage", tr.stage, "disp-pretrain, rec-train or joint-finetune (default by task)");
  t->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  t->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  t->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  t->add_option("--decay-epoch", tr.decay_epoch, "Epoch at which the learning rate halves (default 60% of epochs)");
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed")->capture_default_str();
  t->add_flag("--no-disp", tr.no_disp, "Drop DispNet-B (ablation)");
  t->add_flag("--no-corr", tr.no_corr, "Drop CorrNet (ablation)");
  t->add_option("--disp-source", tr.disp_source, "Disparities fed in rec-train: dispnetb, sgbm, groundtruth")
      ->capture_default_str();
  t->add_option("--init", tr.init, "Checkpoint providing pretrained DispNet-B weights");
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");
  t->add_option("--stop-after", tr.stop_after, "Stop (and checkpoint) after this epoch; continue with --resume");
  t->add_option("--curve", tr.curve, "Loss-curve TSV (default <out>.curve.tsv)");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Also checkpoint every N epochs (0: end only)")
      ->capture_default_str();
  t->add_option("--train-points", tr.train_points, "Ground-truth points per sample in the chamfer loss")
      ->capture_default_str();
  t->add_option("--joint-weight", tr.joint_weight, "Disparity-loss weight in joint fine-tuning")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--model", ev.model, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset root")->required();
  e->add_option("--metrics", ev.metrics, "Comma-separated: iou, cd, epe")->capture_default_str();
  e->add_option("--threshold", ev.threshold, "IoU occupancy threshold")->capture_default_str();
  e->add_option("--disp-source", ev.disp_source, "Disparities used: dispnetb, sgbm, groundtruth")
      ->capture_default_str();
  e->add_option("--out", ev.out, "Report TSV (default stdout)");

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Run a checkpoint on one stereo pair");
  i->add_option("--model", in.model, "Checkpoint")->required();
  i->add_option("--left", in.left, "Left image (PPM)")->required();
  i->add_option("--right", in.right, "Right image (PPM)")->required();
  i->add_option("--out", in.out, "Output directory")->required();
  i->add_option("--threshold", in.threshold, "Occupancy threshold for the exported grid")->capture_default_str();

  SelftestArgs st;
  auto* s = app.add_subcommand("selftest", "Gradient, metric, cost-volume and geometry checks");
  s->add_flag("--inject-nan", st.inject_nan, "Add a poisoned gradient check that must fail");
  s->add_option("--seeds", st.seeds, "Seeds per gradient check")->capture_default_str();
  s->add_option("--geometry-samples", st.geometry_samples, "Generated samples in the geometry suite")
      ->capture_default_str();

  HarnessArgs ab;
  auto* a = app.add_subcommand("ablation", "Train and evaluate the four DispNet-B/CorrNet configurations");
  add_budget(a, ab);

  HarnessArgs sw;
  auto* w = app.add_subcommand("swap", "Evaluate reconstruction with each disparity source");
  add_budget(w, sw);
  w->add_option("--sources", sw.sources, "Comma-separated disparity sources")->capture_default_str();
  w->add_option("--train-source", sw.train_source, "Disparities the reconstruction networks train on")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? ok : usage;
  }
  threads = resolve_threads(threads);

  try {
    if (*g) return cmd_gen(gen, threads);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*i) return cmd_infer(in);
    if (*s) return cmd_selftest(st);
    if (*a) return cmd_ablation(ab);
    if (*w) return cmd_swap(sw);
  } catch (const ad::NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return numeric;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return data;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return usage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return usage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return data;
  }
  return usage;
}
