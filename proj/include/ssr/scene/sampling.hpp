#pragma once

#include <stdexcept>

#include "ssr/scene/mesh.hpp"

namespace ssr::scene {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
};

/// Area-weighted uniform surface sampling. If `sources` is given it receives
/// the triangle index of every point.
inline PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                                 std::vector<std::size_t>* sources = nullptr) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface: mesh has no triangles");
  if (n == 0) throw std::invalid_argument("sample_surface: need at least one point");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) cumulative[t] = total += mesh.area(t);
  if (!(total > 0)) throw std::invalid_argument("sample_surface: mesh has zero area");

  Rng rng(seed);
  PointCloud out;
  out.points.reserve(n);
  if (sources) sources->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    const std::size_t t = std::min<std::size_t>(std::size_t(it - cumulative.begin()), cumulative.size() - 1);
    const double s = std::sqrt(rng.uniform()), b = rng.uniform();
    const auto [p0, p1, p2] = mesh.corners(t);
    out.points.push_back(p0 * (1 - s) + p1 * (s * (1 - b)) + p2 * (s * b));
    if (sources) (*sources)[i] = t;
  }
  return out;
}

}  // namespace ssr::scene
