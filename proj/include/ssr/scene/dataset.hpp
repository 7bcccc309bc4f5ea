#pragma once

#include <filesystem>
#include <numbers>
#include <string>

#include "ssr/io/formats.hpp"
#include "ssr/parallel.hpp"
#include "ssr/scene/disparity.hpp"
#include "ssr/scene/primitives.hpp"
#include "ssr/scene/render.hpp"
#include "ssr/scene/sampling.hpp"
#include "ssr/scene/voxelize.hpp"

namespace ssr::scene {

struct StereoSample {
  RgbImage left_rgb, right_rgb;
  DepthMap depth_l, depth_r;
  DisparityMap disp_l, disp_r;
  Mask occl_l, occl_r;
  VoxelGrid voxels;
  PointCloud points;
  StereoCamera camera;
  Pose pose;
  ShapeKind kind = ShapeKind::box;
  std::uint64_t seed = 0;
};

/// How a native-size render maps to the network input size. `rescale` keeps
/// the field of view (the image is rendered directly at the output size);
/// `crop` keeps the pixel pitch of the native render and takes the central
/// window, which narrows the field of view.
enum class ResizeMode { rescale, crop };

struct DatasetConfig {
  std::size_t count = 0;
  std::uint64_t seed = 1;
  StereoCamera camera{};          // output size lives in image_width_px/height_px
  std::size_t native_width_px = 224;
  ResizeMode resize = ResizeMode::rescale;
  int voxel_resolution = 32;
  std::size_t n_gt = 16384;
  bool jitter = true;
  bool texture = true;
  double texture_edge = 0.04;
  double texture_strength = 0.35;
  std::vector<ShapeKind> kinds{ShapeKind::box,   ShapeKind::sphere, ShapeKind::cylinder,
                               ShapeKind::table, ShapeKind::chair,  ShapeKind::lamp};
  double diagonal = 1.0;  // object bounding-box diagonal in meters
  double min_distance_m = 1.1, max_distance_m = 1.5;
  double min_elevation_deg = -20, max_elevation_deg = 30;
  unsigned threads = 0;
};

/// Camera actually used for the emitted images.
inline StereoCamera effective_camera(const DatasetConfig& cfg) {
  StereoCamera cam = cfg.camera;
  if (cfg.resize == ResizeMode::crop) {
    if (cam.image_width_px > cfg.native_width_px)
      throw std::invalid_argument("crop: output wider than the native render");
    cam.sensor_width_mm *= double(cam.image_width_px) / double(cfg.native_width_px);
  }
  return cam;
}

namespace detail {

inline Vec3 rotate_about(Vec3 v, Vec3 axis, double rad) {
  axis = normalized(axis);
  return v * std::cos(rad) + cross(axis, v) * std::sin(rad) + axis * (dot(axis, v) * (1 - std::cos(rad)));
}

inline Mesh random_shape(ShapeKind kind, Rng& rng) {
  PrimitiveParams p;
  p.albedo = {rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9)};
  p.extent = {rng.uniform(0.35, 1.0), rng.uniform(0.35, 1.0), rng.uniform(0.35, 1.0)};
  p.radius = kind == ShapeKind::sphere ? 0.5 : rng.uniform(0.15, 0.5);
  p.height = rng.uniform(0.4, 1.0);
  p.subdivisions = 3;
  return make_primitive(kind, p, rng.next());
}

}  // namespace detail

/// Builds sample `index` of a dataset in memory.
inline StereoSample make_sample(const DatasetConfig& cfg, std::size_t index) {
  StereoSample s;
  s.seed = mix_seed(cfg.seed, index);
  Rng rng(s.seed);
  if (cfg.kinds.empty()) throw std::invalid_argument("dataset: no shape kinds selected");
  s.kind = cfg.kinds[rng.index(cfg.kinds.size())];
  const Mesh mesh = normalize_diagonal(detail::random_shape(s.kind, rng), cfg.diagonal);
  s.pose.azimuth_deg = rng.uniform(0.0, 360.0);
  s.pose.elevation_deg = rng.uniform(cfg.min_elevation_deg, cfg.max_elevation_deg);
  s.pose.distance_m = rng.uniform(cfg.min_distance_m, cfg.max_distance_m);
  s.camera = effective_camera(cfg);

  Lighting light;
  Mesh shaded = mesh;
  // Jitter draws are taken unconditionally so the geometry stream does not
  // depend on the flag.
  const double yaw = rng.uniform(-15.0, 15.0), pitch = rng.uniform(-15.0, 15.0);
  const double gain = rng.uniform(0.7, 1.3);
  const Vec3 tint{rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
  if (cfg.jitter) {
    const double deg = std::numbers::pi / 180.0;
    light.direction = detail::rotate_about(light.direction, {0, 1, 0}, yaw * deg);
    light.direction = normalized(detail::rotate_about(light.direction, {1, 0, 0}, pitch * deg));
    light.intensity *= gain;
    for (auto& a : shaded.albedo) a = hadamard(a, tint);
  }
  const std::uint64_t texture_seed = rng.next(), point_seed = rng.next();
  if (cfg.texture) shaded = apply_texture(shaded, cfg.texture_edge, cfg.texture_strength, texture_seed);

  auto views = render_stereo(shaded, s.pose, s.camera, light);
  s.left_rgb = std::move(views.left_rgb);
  s.right_rgb = std::move(views.right_rgb);
  s.depth_l = std::move(views.depth_l);
  s.depth_r = std::move(views.depth_r);
  s.disp_l = depth_to_disparity(s.depth_l, s.camera);
  s.disp_r = depth_to_disparity(s.depth_r, s.camera);
  auto occ = compute_occlusion(s.disp_l, s.disp_r);
  s.occl_l = std::move(occ.left);
  s.occl_r = std::move(occ.right);
  s.voxels = voxelize(mesh, cfg.voxel_resolution);
  s.points = sample_surface(mesh, cfg.n_gt, point_seed);
  return s;
}

inline std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%06zu", index);
  return buf;
}

inline void save_sample(const std::filesystem::path& dir, const StereoSample& s, std::size_t index) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  io::write_ppm(dir / "left.ppm", s.left_rgb);
  io::write_ppm(dir / "right.ppm", s.right_rgb);
  io::write_ssdm(dir / "depth_l.ssdm", s.depth_l);
  io::write_ssdm(dir / "depth_r.ssdm", s.depth_r);
  io::write_ssdm(dir / "disp_l.ssdm", s.disp_l);
  io::write_ssdm(dir / "disp_r.ssdm", s.disp_r);
  io::write_ssbm(dir / "occl_l.ssbm", s.occl_l);
  io::write_ssbm(dir / "occl_r.ssbm", s.occl_r);
  io::write_ssvx(dir / "voxels.ssvx", s.voxels);
  io::write_ply(dir / "points.ply", s.points);
  using io::format_real;
  io::write_meta(dir / "meta.txt",
                 {{"index", std::to_string(index)},
                  {"seed", std::to_string(s.seed)},
                  {"shape", to_string(s.kind)},
                  {"focal_length_mm", format_real(s.camera.focal_length_mm)},
                  {"sensor_width_mm", format_real(s.camera.sensor_width_mm)},
                  {"baseline_mm", format_real(s.camera.baseline_mm)},
                  {"image_width_px", std::to_string(s.camera.image_width_px)},
                  {"image_height_px", std::to_string(s.camera.image_height_px)},
                  {"azimuth_deg", format_real(s.pose.azimuth_deg)},
                  {"elevation_deg", format_real(s.pose.elevation_deg)},
                  {"distance_m", format_real(s.pose.distance_m)},
                  {"voxel_resolution", std::to_string(s.voxels.resolution)},
                  {"n_gt", std::to_string(s.points.size())}});
}

inline StereoSample load_sample(const std::filesystem::path& dir) {
  StereoSample s;
  const auto meta_path = dir / "meta.txt";
  const auto meta = io::read_meta(meta_path);
  auto get = [&](const char* k) { return io::meta_get(meta, k, meta_path); };
  try {
    s.seed = std::stoull(get("seed"));
    const auto kind = parse_shape_kind(get("shape"));
    if (!kind) throw DataError(meta_path.string() + ": unknown shape " + get("shape"));
    s.kind = *kind;
    s.camera.focal_length_mm = std::stod(get("focal_length_mm"));
    s.camera.sensor_width_mm = std::stod(get("sensor_width_mm"));
    s.camera.baseline_mm = std::stod(get("baseline_mm"));
    s.camera.image_width_px = std::stoul(get("image_width_px"));
    s.camera.image_height_px = std::stoul(get("image_height_px"));
    s.pose.azimuth_deg = std::stod(get("azimuth_deg"));
    s.pose.elevation_deg = std::stod(get("elevation_deg"));
    s.pose.distance_m = std::stod(get("distance_m"));
  } catch (const std::logic_error& e) {
    throw DataError(meta_path.string() + ": bad value (" + e.what() + ")");
  }
  s.left_rgb = io::read_ppm(dir / "left.ppm");
  s.right_rgb = io::read_ppm(dir / "right.ppm");
  s.depth_l = io::read_ssdm(dir / "depth_l.ssdm");
  s.depth_r = io::read_ssdm(dir / "depth_r.ssdm");
  s.disp_l = io::read_ssdm(dir / "disp_l.ssdm");
  s.disp_r = io::read_ssdm(dir / "disp_r.ssdm");
  s.occl_l = io::read_ssbm(dir / "occl_l.ssbm");
  s.occl_r = io::read_ssbm(dir / "occl_r.ssbm");
  s.voxels = io::read_ssvx(dir / "voxels.ssvx");
  s.points = io::read_ply(dir / "points.ply");
  const std::size_t W = s.camera.image_width_px, H = s.camera.image_height_px;
  auto check = [&](std::size_t w, std::size_t h, const char* what) {
    if (w != W || h != H) throw DataError(dir.string() + ": " + what + " is " + std::to_string(w) + "x" +
                                          std::to_string(h) + ", camera says " + std::to_string(W) + "x" +
                                          std::to_string(H));
  };
  check(s.left_rgb.width, s.left_rgb.height, "left.ppm");
  check(s.right_rgb.width, s.right_rgb.height, "right.ppm");
  for (const auto* m : {&s.depth_l, &s.depth_r, &s.disp_l, &s.disp_r}) check(m->width, m->height, "a depth/disparity map");
  check(s.occl_l.width, s.occl_l.height, "occl_l.ssbm");
  check(s.occl_r.width, s.occl_r.height, "occl_r.ssbm");
  return s;
}

/// Invariant sweep over one sample; returns human-readable violations.
inline std::vector<std::string> check_sample(const StereoSample& s) {
  std::vector<std::string> problems;
  auto identity = [&](const DepthMap& depth, const DisparityMap& disp, const char* view) {
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
      const float expect = disparity_from_depth(depth.data[i], s.camera);
      if (std::bit_cast<std::uint32_t>(expect) != std::bit_cast<std::uint32_t>(disp.data[i]) || disp.data[i] < 0) {
        problems.push_back(std::string(view) + " disparity/depth mismatch at pixel " + std::to_string(i));
        return;
      }
    }
  };
  identity(s.depth_l, s.disp_l, "left");
  identity(s.depth_r, s.disp_r, "right");
  const auto occ = compute_occlusion(s.disp_l, s.disp_r);
  if (occ.left.data != s.occl_l.data || occ.right.data != s.occl_r.data)
    problems.push_back("occlusion masks disagree with the left-right check");
  for (const auto& p : s.points.points)
    if (!(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z))) {
      problems.push_back("non-finite point");
      break;
    }
  for (float v : s.left_rgb.data)
    if (!(v >= 0 && v <= 1)) {
      problems.push_back("left image value outside [0, 1]");
      break;
    }
  return problems;
}

/// Writes `cfg.count` samples under out_dir plus manifest.txt listing the
/// sample directories (relative to out_dir). Returns the manifest lines.
inline std::vector<std::string> generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::string> names(cfg.count);
  parallel_for(cfg.count, resolve_threads(cfg.threads), [&](std::size_t i) {
    try {
      names[i] = sample_name(i);
      save_sample(out_dir / names[i], make_sample(cfg, i), i);
    } catch (const DataError& e) {
      throw DataError("sample " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("sample " + std::to_string(i) + ": " + e.what());
    }
  });
  std::string manifest;
  for (const auto& n : names) manifest += n + "\n";
  io::detail::write_all(out_dir / "manifest.txt", manifest);
  return names;
}

/// Sample directories listed in `<root>/manifest.txt`, resolved against root.
inline std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& root) {
  std::istringstream in(io::detail::read_all(root / "manifest.txt"));
  std::vector<std::filesystem::path> dirs;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) dirs.push_back(root / line);
  return dirs;
}

}  // namespace ssr::scene
