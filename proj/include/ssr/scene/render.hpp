#pragma once

#include <limits>

#include "ssr/scene/camera.hpp"
#include "ssr/scene/mesh.hpp"

namespace ssr::scene {

/// One directional light plus an ambient term, expressed in the camera frame.
/// `direction` points from the surface toward the light.
struct Lighting {
  Vec3 direction = normalized(Vec3{-0.4, -0.7, -0.6});
  double ambient = 0.35;
  double intensity = 0.65;
  Vec3 background{0.5, 0.5, 0.5};
};

struct StereoRender {
  RgbImage left_rgb, right_rgb;
  DepthMap depth_l, depth_r;
};

namespace detail {

struct View {
  RgbImage rgb;
  DepthMap depth;
};

// Z-buffer rasterization of pre-transformed (camera-frame) vertices.
inline View rasterize(const Mesh& mesh, const std::vector<Vec3>& cam_vertices, const StereoCamera& cam,
                      const Lighting& light) {
  const std::size_t W = cam.image_width_px, H = cam.image_height_px;
  View view{RgbImage(W, H), DepthMap(W, H, std::numeric_limits<float>::infinity())};
  std::vector<double> zbuf(W * H, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < W * H; ++i)
    for (int c = 0; c < 3; ++c) view.rgb.data[i * 3 + c] = float(light.background[c]);

  const double f = cam.focal_px(), cx = cam.cx(), cy = cam.cy();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 p0 = cam_vertices[tri[0]], p1 = cam_vertices[tri[1]], p2 = cam_vertices[tri[2]];
    Vec3 n = normalized(cross(p1 - p0, p2 - p0));
    if (dot(n, p0) > 0) n = n * -1.0;
    const double shade = light.ambient + light.intensity * std::max(0.0, dot(n, light.direction));
    Vec3 color = mesh.albedo[t] * shade;

    const double u[3] = {f * p0.x / p0.z + cx, f * p1.x / p1.z + cx, f * p2.x / p2.z + cx};
    const double v[3] = {f * p0.y / p0.z + cy, f * p1.y / p1.z + cy, f * p2.y / p2.z + cy};
    const double iz[3] = {1.0 / p0.z, 1.0 / p1.z, 1.0 / p2.z};
    const double area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0]);
    if (std::abs(area) < 1e-14) continue;
    const double sign = area > 0 ? 1.0 : -1.0;

    const double umin = std::min({u[0], u[1], u[2]}), umax = std::max({u[0], u[1], u[2]});
    const double vmin = std::min({v[0], v[1], v[2]}), vmax = std::max({v[0], v[1], v[2]});
    const long x0 = std::max(0L, long(std::floor(umin - 0.5)));
    const long x1 = std::min(long(W) - 1, long(std::ceil(umax - 0.5)));
    const long y0 = std::max(0L, long(std::floor(vmin - 0.5)));
    const long y1 = std::min(long(H) - 1, long(std::ceil(vmax - 0.5)));
    for (long py = y0; py <= y1; ++py) {
      const double sy = double(py) + 0.5;
      for (long px = x0; px <= x1; ++px) {
        const double sx = double(px) + 0.5;
        const double w0 = sign * ((u[2] - u[1]) * (sy - v[1]) - (v[2] - v[1]) * (sx - u[1]));
        const double w1 = sign * ((u[0] - u[2]) * (sy - v[2]) - (v[0] - v[2]) * (sx - u[2]));
        const double w2 = sign * ((u[1] - u[0]) * (sy - v[0]) - (v[1] - v[0]) * (sx - u[0]));
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double b1 = w1 / (sign * area), b2 = w2 / (sign * area);
        // Written as a correction to vertex 0 so a constant-depth triangle
        // reproduces its depth exactly.
        const double inv = iz[0] + b1 * (iz[1] - iz[0]) + b2 * (iz[2] - iz[0]);
        const double z = 1.0 / inv;
        const std::size_t idx = std::size_t(py) * W + std::size_t(px);
        if (z < zbuf[idx]) {
          zbuf[idx] = z;
          for (int c = 0; c < 3; ++c) view.rgb.data[idx * 3 + c] = float(std::clamp(color[c], 0.0, 1.0));
        }
      }
    }
  }
  for (std::size_t i = 0; i < W * H; ++i) view.depth.data[i] = float(zbuf[i]);
  return view;
}

}  // namespace detail

/// Renders both views of a rectified pair with perspective projection,
/// z-buffering and flat Lambertian shading. Depth maps hold eye-space z in
/// meters with +inf on background pixels.
inline StereoRender render_stereo(const Mesh& mesh, const Pose& pose, const StereoCamera& cam,
                                  const Lighting& light = {}) {
  cam.validate();
  std::vector<Vec3> left(mesh.vertices.size()), right(mesh.vertices.size());
  const Vec3 shift{cam.baseline_m(), 0, 0};
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    left[i] = pose.to_left_camera(mesh.vertices[i], cam);
    right[i] = left[i] - shift;
    if (left[i].z <= 0.2)
      throw std::domain_error("render_stereo: object behind or too close to the camera (z = " +
                              std::to_string(left[i].z) + " m)");
  }
  auto l = detail::rasterize(mesh, left, cam, light);
  auto r = detail::rasterize(mesh, right, cam, light);
  return {std::move(l.rgb), std::move(r.rgb), std::move(l.depth), std::move(r.depth)};
}

}  // namespace ssr::scene
