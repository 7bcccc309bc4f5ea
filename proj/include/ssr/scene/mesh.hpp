#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "ssr/random.hpp"
#include "ssr/scene/geometry.hpp"

namespace ssr::scene {

/// Triangle soup in the object's canonical frame (meters), one albedo per
/// triangle.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> albedo;

  bool empty() const { return triangles.empty(); }

  std::array<Vec3, 3> corners(std::size_t t) const {
    const auto& tri = triangles[t];
    return {vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]};
  }

  double area(std::size_t t) const {
    const auto [a, b, c] = corners(t);
    return 0.5 * norm(cross(b - a, c - a));
  }

  void add_triangle(Vec3 a, Vec3 b, Vec3 c, Vec3 color) {
    const auto base = std::uint32_t(vertices.size());
    vertices.insert(vertices.end(), {a, b, c});
    triangles.push_back({base, base + 1, base + 2});
    albedo.push_back(color);
  }

  void append(const Mesh& other) {
    const auto base = std::uint32_t(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (auto tri : other.triangles) triangles.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
    albedo.insert(albedo.end(), other.albedo.begin(), other.albedo.end());
  }

  Aabb bounds() const {
    Aabb box;
    for (const auto& v : vertices) box.expand(v);
    return box;
  }

  /// Throws on dangling indices or triangles with area <= 1e-12 m^2.
  void validate() const {
    if (albedo.size() != triangles.size())
      throw std::invalid_argument("mesh: albedo count does not match triangle count");
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (auto i : triangles[t])
        if (i >= vertices.size())
          throw std::invalid_argument("mesh: triangle " + std::to_string(t) + " references vertex " +
                                      std::to_string(i));
      if (area(t) <= 1e-12)
        throw std::invalid_argument("mesh: degenerate triangle " + std::to_string(t));
    }
  }
};

inline Mesh transformed(const Mesh& mesh, double scale, Vec3 offset) {
  Mesh out = mesh;
  for (auto& v : out.vertices) v = v * scale + offset;
  return out;
}

/// Centers the mesh at the origin and scales it uniformly so that its
/// bounding-box diagonal equals `diagonal`.
inline Mesh normalize_diagonal(const Mesh& mesh, double diagonal = 1.0) {
  if (mesh.empty()) return mesh;
  const Aabb box = mesh.bounds();
  const double s = diagonal / norm(box.extent());
  return transformed(mesh, s, box.center() * -s);
}

/// Centers the mesh and scales its longest bounding-box side to `extent`.
inline Mesh normalize_extent(const Mesh& mesh, double extent = 1.0) {
  if (mesh.empty()) return mesh;
  const Aabb box = mesh.bounds();
  const Vec3 e = box.extent();
  const double s = extent / std::max({e.x, e.y, e.z});
  return transformed(mesh, s, box.center() * -s);
}

/// Splits triangles along their longest edge until every edge is at most
/// `max_edge`, then perturbs each triangle's albedo by a factor in
/// [1 - strength, 1 + strength]. The per-triangle color noise is what gives
/// the renders matchable texture.
inline Mesh apply_texture(const Mesh& mesh, double max_edge, double strength, std::uint64_t seed) {
  Mesh out;
  Rng rng(seed);
  struct Item {
    Vec3 a, b, c;
  };
  std::vector<Item> stack;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    auto [a, b, c] = mesh.corners(t);
    stack.push_back({a, b, c});
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      const double ab = norm(it.b - it.a), bc = norm(it.c - it.b), ca = norm(it.a - it.c);
      const double longest = std::max({ab, bc, ca});
      if (longest <= max_edge) {
        const double f = 1.0 + strength * rng.uniform(-1.0, 1.0);
        const Vec3 col = mesh.albedo[t] * f;
        out.add_triangle(it.a, it.b, it.c,
                         {std::clamp(col.x, 0.0, 1.0), std::clamp(col.y, 0.0, 1.0), std::clamp(col.z, 0.0, 1.0)});
        continue;
      }
      if (longest == ab) {
        const Vec3 m = (it.a + it.b) * 0.5;
        stack.push_back({m, it.b, it.c});
        stack.push_back({it.a, m, it.c});
      } else if (longest == bc) {
        const Vec3 m = (it.b + it.c) * 0.5;
        stack.push_back({it.a, m, it.c});
        stack.push_back({it.a, it.b, m});
      } else {
        const Vec3 m = (it.c + it.a) * 0.5;
        stack.push_back({m, it.b, it.c});
        stack.push_back({it.a, it.b, m});
      }
    }
  }
  return out;
}

}  // namespace ssr::scene
