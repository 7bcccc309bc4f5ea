#pragma once

#include <stdexcept>

#include "ssr/scene/mesh.hpp"

namespace ssr::scene {

/// Occupancy over the canonical cube [-0.5, 0.5]^3 split into R^3 cells.
/// Cell (x, y, z) is stored at x + R * (y + R * z).
struct VoxelGrid {
  int resolution = 0;
  std::vector<std::uint8_t> occupancy;

  VoxelGrid() = default;
  explicit VoxelGrid(int r) : resolution(r), occupancy(std::size_t(r) * r * r, 0) {}

  std::size_t index(int x, int y, int z) const { return std::size_t(x) + std::size_t(resolution) * (y + std::size_t(resolution) * z); }
  std::uint8_t& at(int x, int y, int z) { return occupancy[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return occupancy[index(x, y, z)]; }
  double cell_size() const { return 1.0 / resolution; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : occupancy) n += v != 0;
    return n;
  }

  /// True if any cell whose closed box contains p (within tol) is occupied.
  bool contains(Vec3 p, double tol = 1e-9) const {
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const double s = (p[a] + 0.5) * resolution;
      lo[a] = std::max(0, int(std::floor(s - tol * resolution)));
      hi[a] = std::min(resolution - 1, int(std::floor(s + tol * resolution)));
      if (lo[a] > hi[a]) return false;
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x)
          if (at(x, y, z)) return true;
    return false;
  }
};

namespace detail {

// Separating-axis test between a triangle and an axis-aligned box. Touching
// counts as separated, so a face lying exactly on a cell wall does not mark
// the cells on either side.
inline bool triangle_box_overlap(Vec3 center, double half, const std::array<Vec3, 3>& tri) {
  const Vec3 v[3] = {tri[0] - center, tri[1] - center, tri[2] - center};
  constexpr double eps = 1e-12;
  auto separated = [&](Vec3 axis) {
    double pmin = 1e300, pmax = -1e300;
    for (const auto& p : v) {
      const double d = dot(p, axis);
      pmin = std::min(pmin, d);
      pmax = std::max(pmax, d);
    }
    const double r = half * (std::abs(axis.x) + std::abs(axis.y) + std::abs(axis.z));
    const double scale = norm(axis);
    if (scale < 1e-15) return false;
    return pmin >= r - eps * scale || pmax <= -r + eps * scale;
  };
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const auto& a : axes)
    if (separated(a)) return false;
  const Vec3 e[3] = {v[1] - v[0], v[2] - v[1], v[0] - v[2]};
  if (separated(cross(e[0], e[1]))) return false;
  for (const auto& a : axes)
    for (const auto& ed : e)
      if (separated(cross(a, ed))) return false;
  return true;
}

}  // namespace detail

/// Solid voxelization. Cells whose interior a triangle passes through are
/// marked, then everything not reachable from outside the cube is filled.
/// The outside flood walks cell centers (6-connected) and may not step
/// across a triangle, which also seals faces lying exactly on cell walls.
/// Set `fill_interior` to false for a surface-only grid.
inline VoxelGrid voxelize(const Mesh& mesh, int R, bool fill_interior = true) {
  if (R < 1) throw std::invalid_argument("voxelize: resolution must be positive");
  VoxelGrid grid(R);
  if (mesh.empty()) return grid;
  const double h = 1.0 / R;
  auto cell_of = [&](double c) { return int(std::floor((c + 0.5) * R)); };

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto tri = mesh.corners(t);
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const double mn = std::min({tri[0][a], tri[1][a], tri[2][a]});
      const double mx = std::max({tri[0][a], tri[1][a], tri[2][a]});
      lo[a] = std::max(0, cell_of(mn) - 1);
      hi[a] = std::min(R - 1, cell_of(mx) + 1);
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          if (grid.at(x, y, z)) continue;
          const Vec3 c{-0.5 + (x + 0.5) * h, -0.5 + (y + 0.5) * h, -0.5 + (z + 0.5) * h};
          if (detail::triangle_box_overlap(c, 0.5 * h, tri)) grid.at(x, y, z) = 1;
        }
  }
  if (!fill_interior) return grid;

  // Padded lattice: index -1..R per axis, stored shifted by one.
  const int P = R + 2;
  auto pidx = [&](int x, int y, int z) { return std::size_t(x + 1) + std::size_t(P) * (y + 1 + std::size_t(P) * (z + 1)); };
  // blocked[a][pidx(c)] : the step from c to c + e_a crosses a triangle.
  std::vector<std::uint8_t> blocked[3];
  for (auto& b : blocked) b.assign(std::size_t(P) * P * P, 0);
  auto center = [&](int i) { return -0.5 + (i + 0.5) * h; };

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto tri = mesh.corners(t);
    const Vec3 n = cross(tri[1] - tri[0], tri[2] - tri[0]);
    for (int a = 0; a < 3; ++a) {
      const int u = (a + 1) % 3, w = (a + 2) % 3;
      if (std::abs(n[a]) < 1e-14 * norm(n)) continue;  // parallel to the walk direction
      const double area = (tri[1][u] - tri[0][u]) * (tri[2][w] - tri[0][w]) - (tri[1][w] - tri[0][w]) * (tri[2][u] - tri[0][u]);
      const double sgn = area > 0 ? 1.0 : -1.0;
      const double tol = 1e-12 * std::abs(area);
      const int ulo = std::max(-1, cell_of(std::min({tri[0][u], tri[1][u], tri[2][u]})) - 1);
      const int uhi = std::min(R, cell_of(std::max({tri[0][u], tri[1][u], tri[2][u]})) + 1);
      const int wlo = std::max(-1, cell_of(std::min({tri[0][w], tri[1][w], tri[2][w]})) - 1);
      const int whi = std::min(R, cell_of(std::max({tri[0][w], tri[1][w], tri[2][w]})) + 1);
      for (int iw = wlo; iw <= whi; ++iw)
        for (int iu = ulo; iu <= uhi; ++iu) {
          const double pu = center(iu), pw = center(iw);
          bool inside = true;
          for (int k = 0; k < 3 && inside; ++k) {
            const Vec3& A = tri[k];
            const Vec3& B = tri[(k + 1) % 3];
            const double e = sgn * ((B[u] - A[u]) * (pw - A[w]) - (B[w] - A[w]) * (pu - A[u]));
            inside = e >= -tol;
          }
          if (!inside) continue;
          const double pa = (dot(n, tri[0]) - n[u] * pu - n[w] * pw) / n[a];
          const double s = (pa + 0.5) * R - 0.5;  // lattice coordinate of the crossing
          const double fl = std::floor(s);
          int first = int(fl), last = int(fl);
          if (s - fl < 1e-9) first = int(fl) - 1;
          if (fl + 1 - s < 1e-9) last = int(fl) + 1;
          for (int i = std::max(-1, first); i <= std::min(R, last); ++i) {
            if (i + 1 > R) continue;
            int c[3];
            c[a] = i;
            c[u] = iu;
            c[w] = iw;
            blocked[a][pidx(c[0], c[1], c[2])] = 1;
          }
        }
    }
  }

  std::vector<std::uint8_t> seen(std::size_t(P) * P * P, 0);
  auto wall = [&](int x, int y, int z) {
    return x >= 0 && x < R && y >= 0 && y < R && z >= 0 && z < R && grid.at(x, y, z);
  };
  std::vector<std::array<int, 3>> stack{{-1, -1, -1}};
  seen[pidx(-1, -1, -1)] = 1;
  while (!stack.empty()) {
    const auto c = stack.back();
    stack.pop_back();
    for (int a = 0; a < 3; ++a)
      for (int dir : {-1, 1}) {
        auto nb = c;
        nb[a] += dir;
        if (nb[a] < -1 || nb[a] > R) continue;
        const auto& from = dir > 0 ? c : nb;
        if (blocked[a][pidx(from[0], from[1], from[2])]) continue;
        const auto k = pidx(nb[0], nb[1], nb[2]);
        if (seen[k] || wall(nb[0], nb[1], nb[2])) continue;
        seen[k] = 1;
        stack.push_back(nb);
      }
  }
  for (int z = 0; z < R; ++z)
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        if (!seen[pidx(x, y, z)]) grid.at(x, y, z) = 1;
  return grid;
}

}  // namespace ssr::scene
