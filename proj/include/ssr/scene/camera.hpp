#pragma once

#include <limits>
#include <numbers>
#include <stdexcept>

#include "ssr/scene/geometry.hpp"

namespace ssr::scene {

/// Rectified stereo rig: both cameras share orientation, the right one sits
/// `baseline_mm` along +x of the left one. Defaults are the 35 mm lens on a
/// 32 mm wide sensor with a 130 mm baseline.
struct StereoCamera {
  double focal_length_mm = 35.0;
  double sensor_width_mm = 32.0;
  double baseline_mm = 130.0;
  std::size_t image_width_px = 137;
  std::size_t image_height_px = 137;

  double focal_px() const { return focal_length_mm / sensor_width_mm * double(image_width_px); }
  double baseline_m() const { return baseline_mm / 1000.0; }
  double cx() const { return 0.5 * double(image_width_px); }
  double cy() const { return 0.5 * double(image_height_px); }

  void validate() const {
    if (!(focal_length_mm > 0 && sensor_width_mm > 0 && baseline_mm >= 0 && image_width_px > 0 &&
          image_height_px > 0))
      throw std::invalid_argument("camera: parameters must be positive");
  }
};

/// Object placement: rotation on the viewing sphere and distance from the
/// rig's midpoint along the optical axis.
struct Pose {
  double azimuth_deg = 0;
  double elevation_deg = 0;
  double distance_m = 2.0;

  /// Canonical (y up) -> left-camera frame (x right, y down, z forward).
  Mat3 rotation() const {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    Mat3 flip;
    flip.m[1][1] = -1;
    return flip * Mat3::rotation_x(-el) * Mat3::rotation_y(az);
  }

  Vec3 to_left_camera(Vec3 p, const StereoCamera& cam) const {
    return rotation() * p + Vec3{cam.baseline_m() / 2, 0, distance_m};
  }
};

/// Pinhole disparity for one depth value; +inf depth maps to 0.
inline float disparity_from_depth(float depth, const StereoCamera& cam) {
  if (std::isinf(depth) && depth > 0) return 0.f;
  if (!(depth > 0)) throw std::domain_error("depth must be positive or +inf");
  return float(cam.focal_px() * cam.baseline_m() / double(depth));
}

}  // namespace ssr::scene
