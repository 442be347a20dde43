#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "panoalign/grid.hpp"

namespace panoalign {

/// Static 3D KD-tree over a borrowed point array for exact nearest-neighbor
/// queries. The points must outlive the tree.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  struct Nearest {
    std::size_t index = 0;
    double distance = 0.0;
  };

  /// Exact nearest point; ties resolve to the smallest index.
  Nearest nearest(const Vec3& query) const;

  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // leaf range into order_
    int axis = -1;                   // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Euclidean distance computed exactly as the brute-force reference does.
inline double point_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace panoalign
