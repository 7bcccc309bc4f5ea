#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ssr/io/formats.hpp"
#include "ssr/train/trainer.hpp"

namespace fs = std::filesystem;
namespace tr = ssr::train;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    // Per process: ctest runs each test case in its own process.
    auto d = fs::temp_directory_path() / ("ssr_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Exit status of `ssr <args>` run inside the work directory.
int run(const std::string& args) {
  const std::string cmd = "cd '" + work().string() + "' && '" SSR_CLI_PATH "' --threads 1 " + args +
                          " > /dev/null 2> last_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string bytes(const std::string& rel) { return ssr::io::detail::read_all(work() / rel); }

// Tiny dataset and a DispNet-B checkpoint shared by the tests below.
void ensure_fixture() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(run("gen --out data --count 4 --seed 3 --width 16 --height 16 --voxel-res 4 --n-gt 256"), 0);
  ASSERT_EQ(run("train --task disparity --data data --scale tiny --epochs 3 --batch 3 --lr 1e-3 --out disp.ckpt"), 0);
  done = true;
}

}  // namespace

TEST(Cli, ExitCodes) {
  ensure_fixture();
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("gen --out x --bogus-flag"), 1);
  EXPECT_EQ(run("train --task banana --data data --out x.ckpt"), 1);
  EXPECT_EQ(run("eval --model disp.ckpt --data data --metrics fscore"), 1);
  EXPECT_EQ(run("eval --model disp.ckpt --data missing"), 2);
  EXPECT_EQ(run("train --task volume --data data --scale desk --disp-source groundtruth --out x.ckpt"), 2);
  EXPECT_EQ(run("eval --model data/manifest.txt --data data"), 2);
  EXPECT_EQ(run("selftest --seeds 1 --geometry-samples 2 --inject-nan"), 3);
  EXPECT_EQ(run("selftest --seeds 1 --geometry-samples 2"), 0);
}

TEST(Cli, EmptyCountWritesEmptyManifest) {
  ASSERT_EQ(run("gen --out empty --count 0"), 0);
  EXPECT_EQ(bytes("empty/manifest.txt"), "");
}

TEST(Cli, CurveRecordsDefaultLearningRate) {
  ensure_fixture();
  // 4 samples at batch 4: one step per epoch; the rate halves at epoch 3 of 5.
  ASSERT_EQ(run("train --task disparity --data data --scale tiny --epochs 5 --batch 4 --out lr.ckpt"), 0);
  std::istringstream curve(bytes("lr.ckpt.curve.tsv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(curve, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "step\tstage\tloss\tlr");
  EXPECT_EQ(lines[1].substr(0, 16), "1\tdisp-pretrain\t");
  EXPECT_TRUE(lines[1].ends_with("\t0.0001")) << lines[1];
  EXPECT_TRUE(lines[4].ends_with("\t5.0000000000000002e-05")) << lines[4];
}

TEST(Cli, ResumeMatchesUninterruptedRunByteForByte) {
  ensure_fixture();
  const std::string common = "train --task point --data data --scale tiny --epochs 5 --batch 3 --lr 1e-3 "
                             "--train-points 64 --init disp.ckpt ";
  ASSERT_EQ(run(common + "--out full.ckpt"), 0);
  ASSERT_EQ(run(common + "--out part.ckpt --stop-after 2"), 0);
  ASSERT_EQ(run(common + "--out part.ckpt --resume part.ckpt"), 0);
  EXPECT_EQ(bytes("full.ckpt"), bytes("part.ckpt"));
  EXPECT_EQ(bytes("full.ckpt.curve.tsv"), bytes("part.ckpt.curve.tsv"));
  EXPECT_EQ(run("train --task point --data data --scale tiny --epochs 5 --batch 3 --lr 2e-3 --out bad.ckpt "
                "--resume part.ckpt"),
            1);
}

TEST(Cli, InferExportsThresholdedGridMatchingEvaluation) {
  ensure_fixture();
  ASSERT_EQ(run("train --task volume --data data --scale tiny --epochs 4 --batch 3 --lr 1e-3 --init disp.ckpt "
                "--out vol.ckpt"),
            0);
  ASSERT_EQ(run("infer --model vol.ckpt --left data/sample_000002/left.ppm --right data/sample_000002/right.ppm "
                "--out pred"),
            0);
  for (const char* f : {"pred/disp_l.ssdm", "pred/disp_r.ssdm", "pred/montage.ppm", "pred/voxels.ssvx"})
    EXPECT_TRUE(fs::exists(work() / f)) << f;
  const auto grid = ssr::io::read_ssvx(work() / "pred/voxels.ssvx");
  const auto montage = ssr::io::read_ppm(work() / "pred/montage.ppm");
  EXPECT_EQ(montage.width, 32u);

  // Same pair through the library: thresholded probabilities and IoU agree.
  const auto model = tr::load_model(ssr::ad::read_checkpoint(work() / "vol.ckpt"));
  const auto data = tr::load_dataset(work() / "data");
  tr::EvalOptions opt;
  opt.metrics = {"iou"};
  const auto rep = tr::evaluate(model, data, opt).at(0);
  const auto& gt = data.samples[2].voxels.occupancy;
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    inter += grid.occupancy[i] && gt[i];
    uni += grid.occupancy[i] || gt[i];
  }
  EXPECT_EQ(uni ? double(inter) / double(uni) : 1.0, rep.values[2]);

  ssr::ad::NoGradGuard guard;
  const auto l = tr::image_batch(data, {2}, false), r = tr::image_batch(data, {2}, true);
  const auto disp = model.disparity(l, r);
  const auto pred = model.forward(l, r, ssr::ad::Mode::eval, &disp);
  for (std::size_t i = 0; i < gt.size(); ++i) ASSERT_EQ(grid.occupancy[i], double(pred.output[i]) > 0.4) << i;

  EXPECT_EQ(run("infer --model vol.ckpt --left data/sample_000002/left.ppm --right pred/montage.ppm --out bad"), 2);
}

TEST(Cli, PointInferenceWritesPly) {
  ensure_fixture();
  ASSERT_EQ(run("train --task point --data data --scale tiny --epochs 1 --batch 4 --init disp.ckpt --out pts.ckpt"), 0);
  ASSERT_EQ(run("infer --model pts.ckpt --left data/sample_000000/left.ppm --right data/sample_000000/right.ppm "
                "--out pts"),
            0);
  EXPECT_EQ(ssr::io::read_ply(work() / "pts/points.ply").size(), 8u);
}
