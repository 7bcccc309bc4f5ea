#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssr/autodiff/tensor.hpp"
#include "ssr/nets/config.hpp"
#include "ssr/scene/dataset.hpp"
#include "ssr/stereo/sgbm.hpp"

namespace ssr::train {

using scene::StereoSample;
using Tensor = ad::Tensor<float>;

enum class DispSource { dispnetb, sgbm, groundtruth };

inline const char* to_string(DispSource s) {
  switch (s) {
    case DispSource::dispnetb: return "dispnetb";
    case DispSource::sgbm: return "sgbm";
    case DispSource::groundtruth: return "groundtruth";
  }
  return "?";
}

inline std::optional<DispSource> parse_disp_source(const std::string& s) {
  for (auto v : {DispSource::dispnetb, DispSource::sgbm, DispSource::groundtruth})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

/// A loaded dataset: samples in manifest order plus their directory names.
struct Dataset {
  std::vector<std::string> names;
  std::vector<StereoSample> samples;

  std::size_t size() const { return samples.size(); }
};

inline Dataset load_dataset(const std::filesystem::path& root) {
  Dataset d;
  for (const auto& dir : scene::read_manifest(root)) {
    d.names.push_back(dir.filename().string());
    d.samples.push_back(scene::load_sample(dir));
  }
  return d;
}

/// Throws DataError when the samples do not fit the network configuration.
inline void check_compatible(const Dataset& d, const nets::ScaleConfig& cfg, bool needs_voxels) {
  if (d.size() == 0) throw DataError("dataset is empty");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& s = d.samples[i];
    if (s.left_rgb.width != cfg.width || s.left_rgb.height != cfg.height)
      throw DataError("sample " + d.names[i] + " is " + std::to_string(s.left_rgb.width) + "x" +
                      std::to_string(s.left_rgb.height) + ", scale '" + cfg.name + "' expects " +
                      std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
    if (needs_voxels && std::size_t(s.voxels.resolution) != cfg.volume_res)
      throw DataError("sample " + d.names[i] + " has voxel resolution " + std::to_string(s.voxels.resolution) +
                      ", scale '" + cfg.name + "' expects " + std::to_string(cfg.volume_res));
    if (s.points.size() == 0) throw DataError("sample " + d.names[i] + " has no ground-truth points");
  }
}

/// [N,3,H,W] from the chosen view of samples[idx].
inline Tensor image_batch(const Dataset& d, const std::vector<std::size_t>& idx, bool right) {
  const auto& first = d.samples.at(idx.at(0)).left_rgb;
  const std::size_t H = first.height, W = first.width;
  Tensor t({idx.size(), 3, H, W});
  float* out = t.raw();
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto& img = right ? d.samples[idx[n]].right_rgb : d.samples[idx[n]].left_rgb;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) *out++ = img.at(x, y, c);
  }
  return t;
}

/// [2,H,W] block (left map then right map) as a flat vector.
inline std::vector<float> stack_disparity(const scene::DisparityMap& l, const scene::DisparityMap& r) {
  std::vector<float> out(l.data);
  out.insert(out.end(), r.data.begin(), r.data.end());
  return out;
}

/// [N,2,H,W] gathered from per-sample [2,H,W] blocks.
inline Tensor disparity_batch(const std::vector<std::vector<float>>& maps, const std::vector<std::size_t>& idx,
                              std::size_t H, std::size_t W) {
  Tensor t({idx.size(), 2, H, W});
  for (std::size_t n = 0; n < idx.size(); ++n) std::copy(maps[idx[n]].begin(), maps[idx[n]].end(), t.raw() + n * 2 * H * W);
  return t;
}

inline std::vector<std::vector<float>> ground_truth_disparities(const Dataset& d) {
  std::vector<std::vector<float>> out;
  for (const auto& s : d.samples) out.push_back(stack_disparity(s.disp_l, s.disp_r));
  return out;
}

/// SGBM maps with holes filled, D_max taken from the scale config.
inline std::vector<std::vector<float>> sgbm_disparities(const Dataset& d, const nets::ScaleConfig& cfg) {
  stereo::SgmParams p;
  p.max_disparity = std::max(1, int(std::lround(cfg.max_disparity)));
  std::vector<std::vector<float>> out;
  for (const auto& s : d.samples) {
    auto r = stereo::sgbm_disparity(s.left_rgb, s.right_rgb, p);
    out.push_back(stack_disparity(stereo::fill_holes(r.disp_l, r.valid_l), stereo::fill_holes(r.disp_r, r.valid_r)));
  }
  return out;
}

/// Pixels left out of disparity evaluation ([2,H,W], left then right):
/// occluded pixels and background (ground-truth disparity 0).
inline std::vector<std::uint8_t> epe_exclusion(const StereoSample& s) {
  std::vector<std::uint8_t> out;
  const std::size_t n = s.disp_l.data.size();
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(s.occl_l.data[i] || s.disp_l.data[i] <= 0.f);
  for (std::size_t i = 0; i < n; ++i) out.push_back(s.occl_r.data[i] || s.disp_r.data[i] <= 0.f);
  return out;
}

/// [N,R,R,R] occupancy targets.
inline Tensor voxel_batch(const Dataset& d, const std::vector<std::size_t>& idx) {
  const std::size_t R = std::size_t(d.samples.at(idx.at(0)).voxels.resolution);
  Tensor t({idx.size(), R, R, R});
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto& occ = d.samples[idx[n]].voxels.occupancy;
    for (std::size_t i = 0; i < occ.size(); ++i) t.raw()[n * occ.size() + i] = occ[i] ? 1.f : 0.f;
  }
  return t;
}

/// First `n` ground-truth points (they are drawn i.i.d., so any prefix is a
/// uniform subsample) as an [n,3] tensor.
inline Tensor point_target(const StereoSample& s, std::size_t n) {
  n = std::min(n, s.points.size());
  Tensor t({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    t.raw()[3 * i] = float(s.points.points[i].x);
    t.raw()[3 * i + 1] = float(s.points.points[i].y);
    t.raw()[3 * i + 2] = float(s.points.points[i].z);
  }
  return t;
}

}  // namespace ssr::train
