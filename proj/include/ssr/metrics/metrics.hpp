#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssr/scene/geometry.hpp"

namespace ssr::metrics {

using scene::Vec3;

inline constexpr double default_iou_threshold = 0.4;

/// |{p > t} ∩ V| / |{p > t} ∪ V|, 1 when both sets are empty.
template <typename P>
double iou(std::span<const P> prob, std::span<const std::uint8_t> occupied, double t = default_iou_threshold) {
  if (prob.size() != occupied.size())
    throw std::invalid_argument("iou: " + std::to_string(prob.size()) + " predictions vs " +
                                std::to_string(occupied.size()) + " voxels");
  if (!(t > 0 && t < 1)) throw std::invalid_argument("iou: threshold must lie in (0,1)");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const bool a = double(prob[i]) > t, b = occupied[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

namespace detail {

inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline void require_points(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
}

/// Uniform hash grid over a point set answering exact nearest-neighbour
/// squared distances by searching cubic shells of cells outward.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    origin_ = lo;
    const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-9});
    // About two points per cell along a surface-like set.
    const double cells_per_axis = std::clamp(std::cbrt(double(pts.size())) * 1.5, 1.0, 256.0);
    cell_ = extent / cells_per_axis;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto c = coord(pts[i]);
      for (int k = 0; k < 3; ++k) max_[k] = std::max(max_[k], c[k]);
      cells_[pack(c)].push_back(i);
    }
  }

  double nearest_sq(const Vec3& q) const {
    const auto c = coord(q);
    long rmax = 0;
    for (int k = 0; k < 3; ++k) {
      if (c[k] < 0 || c[k] > max_[k]) return scan(q);
      rmax = std::max({rmax, c[k], max_[k] - c[k]});
    }
    double best = std::numeric_limits<double>::infinity();
    for (long r = 0; r <= rmax; ++r) {
      for (long z = std::max(c[2] - r, 0L); z <= std::min(c[2] + r, max_[2]); ++z)
        for (long y = std::max(c[1] - r, 0L); y <= std::min(c[1] + r, max_[1]); ++y)
          for (long x = std::max(c[0] - r, 0L); x <= std::min(c[0] + r, max_[0]); ++x) {
            if (std::max({std::labs(x - c[0]), std::labs(y - c[1]), std::labs(z - c[2])}) != r) continue;
            auto it = cells_.find(pack({x, y, z}));
            if (it == cells_.end()) continue;
            for (auto i : it->second) best = std::min(best, sq_dist(q, pts_[i]));
          }
      // Points outside the searched shells lie at least r cells away.
      const double reach = double(r) * cell_;
      if (best <= reach * reach) break;
    }
    return best;
  }

 private:
  double scan(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pts_) best = std::min(best, sq_dist(q, p));
    return best;
  }
  std::array<long, 3> coord(const Vec3& p) const {
    return {long(std::floor((p.x - origin_.x) / cell_)), long(std::floor((p.y - origin_.y) / cell_)),
            long(std::floor((p.z - origin_.z) / cell_))};
  }
  static std::uint64_t pack(std::array<long, 3> c) {
    return std::uint64_t(c[0]) | (std::uint64_t(c[1]) << 21) | (std::uint64_t(c[2]) << 42);
  }

  const std::vector<Vec3>& pts_;
  Vec3 origin_;
  double cell_ = 1;
  std::array<long, 3> max_{0, 0, 0};
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

/// Chamfer distance by exhaustive search; `pred` and `gt` play the roles of
/// the predicted and ground-truth sets.
inline double chamfer_naive(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  detail::require_points(pred, gt);
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, detail::sq_dist(p, q));
      s += best;
    }
    return s / double(from.size());
  };
  return one_way(gt, pred) + one_way(pred, gt);
}

/// Chamfer distance with grid-accelerated nearest-neighbour queries.
inline double chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  detail::require_points(pred, gt);
  const detail::PointGrid grid_pred(pred), grid_gt(gt);
  double a = 0, b = 0;
  for (const auto& p : gt) a += grid_pred.nearest_sq(p);
  for (const auto& q : pred) b += grid_gt.nearest_sq(q);
  return a / double(gt.size()) + b / double(pred.size());
}

/// Mean |pred - gt| over pixels whose `excluded` flag is zero.
template <typename A, typename B>
double epe(std::span<const A> pred, std::span<const B> gt, std::span<const std::uint8_t> excluded) {
  if (pred.size() != gt.size() || gt.size() != excluded.size())
    throw std::invalid_argument("epe: map sizes differ");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (excluded[i]) continue;
    s += std::abs(double(pred[i]) - double(gt[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("epe: no pixels to evaluate");
  return s / double(n);
}

/// Per-sample values of one metric.
struct MetricReport {
  std::string metric;
  std::optional<double> threshold;
  std::vector<std::string> sample_ids;
  std::vector<double> values;
  std::vector<std::string> groups;  // optional category per sample

  void add(std::string id, double v, std::string group = {}) {
    sample_ids.push_back(std::move(id));
    values.push_back(v);
    groups.push_back(std::move(group));
  }
  std::size_t count() const { return values.size(); }
  double mean() const {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0;
    for (double v : values) s += v;
    return s / double(values.size());
  }
};

/// Rows: sample_id, metric, value. Each metric ends with a "mean" row and
/// one "mean:<group>" row per group, groups in lexicographic order.
inline void write_report_tsv(std::ostream& os, const std::vector<MetricReport>& reports) {
  char buf[64];
  os << "sample_id\tmetric\tvalue\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.count(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r.values[i]);
      os << r.sample_ids[i] << '\t' << r.metric << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.mean());
    os << "mean\t" << r.metric << '\t' << buf << '\n';
    std::map<std::string, std::pair<double, std::size_t>> by_group;
    for (std::size_t i = 0; i < r.groups.size(); ++i)
      if (!r.groups[i].empty()) {
        by_group[r.groups[i]].first += r.values[i];
        ++by_group[r.groups[i]].second;
      }
    for (const auto& [g, acc] : by_group) {
      std::snprintf(buf, sizeof buf, "%.17g", acc.first / double(acc.second));
      os << "mean:" << g << '\t' << r.metric << '\t' << buf << '\n';
    }
  }
}

}  // namespace ssr::metrics
