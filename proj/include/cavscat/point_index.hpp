#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cavscat/vec.hpp"

namespace cavscat {

/// Merges points that coincide to within `tol` (max-norm). Lookups probe the
/// 27 neighbouring hash cells, so points straddling a cell boundary are found.
class PointIndex {
 public:
  explicit PointIndex(double tol) : tol_(tol), cell_(4.0 * tol) {}

  /// Index of an existing point within tol, or -1.
  int find(const Vec3& x) const {
    const auto k = key(x);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = map_.find(pack(k[0] + dx, k[1] + dy, k[2] + dz));
          if (it == map_.end()) continue;
          for (int idx : it->second) {
            const Vec3& p = points_[idx];
            if (std::abs(p[0] - x[0]) <= tol_ && std::abs(p[1] - x[1]) <= tol_ && std::abs(p[2] - x[2]) <= tol_)
              return idx;
          }
        }
    return -1;
  }

  /// Index of the matching point, inserting x when there is none.
  int insert(const Vec3& x) {
    const int found = find(x);
    if (found >= 0) return found;
    const int idx = static_cast<int>(points_.size());
    points_.push_back(x);
    const auto k = key(x);
    map_[pack(k[0], k[1], k[2])].push_back(idx);
    return idx;
  }

  const std::vector<Vec3>& points() const { return points_; }
  std::vector<Vec3> release() { return std::move(points_); }

 private:
  std::array<std::int64_t, 3> key(const Vec3& x) const {
    return {static_cast<std::int64_t>(std::floor(x[0] / cell_)), static_cast<std::int64_t>(std::floor(x[1] / cell_)),
            static_cast<std::int64_t>(std::floor(x[2] / cell_))};
  }
  static std::uint64_t pack(std::int64_t a, std::int64_t b, std::int64_t c) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {a, b, c}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }

  double tol_;
  double cell_;
  std::vector<Vec3> points_;
  std::unordered_map<std::uint64_t, std::vector<int>> map_;
};

}  // namespace cavscat
