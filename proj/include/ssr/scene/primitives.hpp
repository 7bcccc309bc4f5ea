#pragma once

#include <map>
#include <numbers>
#include <optional>
#include <string>

#include "ssr/scene/mesh.hpp"

namespace ssr::scene {

enum class ShapeKind { box, sphere, cylinder, table, chair, lamp };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::box: return "box";
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::table: return "table";
    case ShapeKind::chair: return "chair";
    case ShapeKind::lamp: return "lamp";
  }
  return "?";
}

inline std::optional<ShapeKind> parse_shape_kind(const std::string& s) {
  for (auto k : {ShapeKind::box, ShapeKind::sphere, ShapeKind::cylinder, ShapeKind::table,
                 ShapeKind::chair, ShapeKind::lamp})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Knobs for the parametric kinds; composites draw their own dimensions from
/// the seed. Ranges: extents in (0, 1], sphere subdivision 0..5, cylinder
/// radius in (0, 0.5], segments >= 3.
struct PrimitiveParams {
  Vec3 extent{1, 1, 1};
  int subdivisions = 2;
  double radius = 0.5;
  double height = 1.0;
  int segments = 24;
  Vec3 albedo{0.7, 0.55, 0.4};
};

/// Axis-aligned box with 8 shared vertices and 12 triangles (outward winding).
inline Mesh make_box(Vec3 center, Vec3 extent, Vec3 albedo) {
  if (extent.x <= 0 || extent.y <= 0 || extent.z <= 0)
    throw std::invalid_argument("box: extents must be positive");
  Mesh m;
  const Vec3 h = extent * 0.5;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({center.x + ((i & 1) ? h.x : -h.x), center.y + ((i & 2) ? h.y : -h.y),
                          center.z + ((i & 4) ? h.z : -h.z)});
  const std::uint32_t faces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                     {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& f : faces) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  m.albedo.assign(12, albedo);
  return m;
}

/// Icosphere of the given radius; every vertex is projected onto the sphere.
inline Mesh make_sphere(Vec3 center, double radius, int subdivisions, Vec3 albedo) {
  if (radius <= 0) throw std::invalid_argument("sphere: radius must be positive");
  if (subdivisions < 0 || subdivisions > 6) throw std::invalid_argument("sphere: subdivisions out of range");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<std::array<std::uint32_t, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back(normalized((v[a] + v[b]) * 0.5));
      return mid[key] = std::uint32_t(v.size() - 1);
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    for (auto [a, b, c] : f) {
      const auto ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
      next.insert(next.end(), {{a, ab, ca}, {b, bc, ab}, {c, ca, bc}, {ab, bc, ca}});
    }
    f = std::move(next);
  }
  Mesh m;
  for (const auto& p : v) m.vertices.push_back(center + p * radius);
  m.triangles = std::move(f);
  m.albedo.assign(m.triangles.size(), albedo);
  return m;
}

/// Capped cylinder with its axis along +y.
inline Mesh make_cylinder(Vec3 center, double radius, double height, int segments, Vec3 albedo) {
  if (radius <= 0 || height <= 0) throw std::invalid_argument("cylinder: radius and height must be positive");
  if (segments < 3) throw std::invalid_argument("cylinder: needs at least 3 segments");
  Mesh m;
  const double y0 = center.y - height / 2, y1 = center.y + height / 2;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    const double x = center.x + radius * std::cos(a), z = center.z + radius * std::sin(a);
    m.vertices.push_back({x, y0, z});
    m.vertices.push_back({x, y1, z});
  }
  const auto bottom = std::uint32_t(m.vertices.size());
  m.vertices.push_back({center.x, y0, center.z});
  m.vertices.push_back({center.x, y1, center.z});
  for (int i = 0; i < segments; ++i) {
    const auto a0 = std::uint32_t(2 * i), a1 = a0 + 1;
    const auto b0 = std::uint32_t(2 * ((i + 1) % segments)), b1 = b0 + 1;
    m.triangles.push_back({a0, a1, b1});
    m.triangles.push_back({a0, b1, b0});
    m.triangles.push_back({bottom, a0, b0});
    m.triangles.push_back({bottom + 1, b1, a1});
  }
  m.albedo.assign(m.triangles.size(), albedo);
  return m;
}

namespace detail {

inline Vec3 random_albedo(Rng& rng) {
  return {rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9)};
}

// Four legs, a top, and optionally a stretcher between two legs.
inline Mesh make_table(Rng& rng) {
  const double w = rng.uniform(0.7, 1.0), d = rng.uniform(0.5, 1.0), h = rng.uniform(0.5, 0.8);
  const double top = rng.uniform(0.04, 0.08), leg = rng.uniform(0.04, 0.08);
  const Vec3 wood = random_albedo(rng), legs = random_albedo(rng);
  Mesh m = make_box({0, h / 2 - top / 2, 0}, {w, top, d}, wood);
  const double lx = w / 2 - leg, lz = d / 2 - leg, leg_h = h - top;
  const bool round_legs = rng.uniform() < 0.5;
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0}) {
      const Vec3 c{sx * lx, -h / 2 + leg_h / 2, sz * lz};
      m.append(round_legs ? make_cylinder(c, leg / 2, leg_h, 8, legs) : make_box(c, {leg, leg_h, leg}, legs));
    }
  if (rng.uniform() < 0.5)
    m.append(make_box({0, -h / 2 + leg_h * 0.3, -lz}, {2 * lx, leg * 0.8, leg * 0.6}, legs));
  return m;
}

// Seat, four legs, backrest panel and two back posts.
inline Mesh make_chair(Rng& rng) {
  const double w = rng.uniform(0.45, 0.6), d = rng.uniform(0.45, 0.6);
  const double seat_h = rng.uniform(0.4, 0.5), back_h = rng.uniform(0.35, 0.5);
  const double seat_t = rng.uniform(0.04, 0.07), leg = rng.uniform(0.035, 0.06);
  const Vec3 body = random_albedo(rng), frame = random_albedo(rng);
  Mesh m = make_box({0, seat_h - seat_t / 2, 0}, {w, seat_t, d}, body);
  const double lx = w / 2 - leg / 2, lz = d / 2 - leg / 2;
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0})
      m.append(make_box({sx * lx, (seat_h - seat_t) / 2, sz * lz}, {leg, seat_h - seat_t, leg}, frame));
  for (double sx : {-1.0, 1.0})
    m.append(make_box({sx * lx, seat_h + back_h / 2, -lz}, {leg, back_h, leg}, frame));
  m.append(make_box({0, seat_h + back_h * 0.65, -lz}, {w - 2 * leg, back_h * 0.5, leg * 0.7}, body));
  return m;
}

// Base disk, thin pole, optional arm, and a shade.
inline Mesh make_lamp(Rng& rng) {
  const double base_r = rng.uniform(0.15, 0.25), base_t = rng.uniform(0.03, 0.06);
  const double pole_h = rng.uniform(0.6, 0.9), pole_r = rng.uniform(0.015, 0.03);
  const Vec3 metal = random_albedo(rng), shade = random_albedo(rng);
  Mesh m = make_cylinder({0, base_t / 2, 0}, base_r, base_t, 16, metal);
  m.append(make_cylinder({0, base_t + pole_h / 2, 0}, pole_r, pole_h, 8, metal));
  const double top = base_t + pole_h;
  double shade_x = 0;
  if (rng.uniform() < 0.5) {
    const double arm = rng.uniform(0.15, 0.3);
    m.append(make_box({arm / 2, top, 0}, {arm, pole_r * 2, pole_r * 2}, metal));
    shade_x = arm;
  }
  const double shade_r = rng.uniform(0.12, 0.22), shade_h = rng.uniform(0.15, 0.25);
  m.append(make_cylinder({shade_x, top - shade_h * 0.3, 0}, shade_r, shade_h, 16, shade));
  return m;
}

}  // namespace detail

/// Builds a mesh that fits inside the canonical cube [-0.5, 0.5]^3 centered on
/// the origin. Parametric kinds are built as specified; composite kinds
/// (table, chair, lamp) are assembled from 4-8 boxes/cylinders and rescaled
/// so their longest side is 1.
inline Mesh make_primitive(ShapeKind kind, const PrimitiveParams& p, std::uint64_t seed) {
  Rng rng(seed);
  Mesh m;
  switch (kind) {
    case ShapeKind::box:
      if (p.extent.x > 1 || p.extent.y > 1 || p.extent.z > 1)
        throw std::invalid_argument("box: extents must lie in (0, 1]");
      return make_box({0, 0, 0}, p.extent, p.albedo);
    case ShapeKind::sphere:
      if (p.radius > 0.5) throw std::invalid_argument("sphere: radius must lie in (0, 0.5]");
      return make_sphere({0, 0, 0}, p.radius, p.subdivisions, p.albedo);
    case ShapeKind::cylinder:
      if (p.radius > 0.5 || p.height > 1) throw std::invalid_argument("cylinder: does not fit the unit cube");
      return make_cylinder({0, 0, 0}, p.radius, p.height, p.segments, p.albedo);
    case ShapeKind::table: m = detail::make_table(rng); break;
    case ShapeKind::chair: m = detail::make_chair(rng); break;
    case ShapeKind::lamp: m = detail::make_lamp(rng); break;
  }
  return normalize_extent(m, 1.0);
}

}  // namespace ssr::scene
