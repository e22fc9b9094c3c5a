#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <utility>
#include <vector>

#include "plant3d/cloud.hpp"

namespace plant3d {

struct Neighbor {
  std::size_t index;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact nearest-neighbor index over a fixed set of points.
///
/// The tree copies the positions it is built from, so it stays valid after
/// the source container goes away. Queries are const and thread-safe.
/// Results are ordered by (distance, index): equal distances resolve to the
/// lower point index.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(const std::vector<Point3>& points) : points_(points) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
  }

  explicit KdTree(const PointCloud& cloud) : KdTree(cloud.points) {}

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const {
    if (k == 0 || k > points_.size()) {
      fail(ErrorKind::InvalidK, "k=" + std::to_string(k) + " outside [1, " + std::to_string(points_.size()) + "]");
    }
    // Max-heap on (squared distance, index); the top is the current worst.
    std::priority_queue<std::pair<double, std::uint32_t>> heap;
    knn_recurse(0, query, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = {heap.top().second, std::sqrt(heap.top().first)};
      heap.pop();
    }
    return out;
  }

  /// All points with distance <= radius (boundary inclusive), sorted ascending.
  std::vector<Neighbor> radius_search(const Point3& query, double radius) const {
    if (!(radius > 0.0)) fail(ErrorKind::InvalidRadius, "radius must be > 0");
    std::vector<Neighbor> out;
    if (points_.empty()) return out;
    // Prune on a slightly inflated squared radius, then filter on the exact
    // distance so that r = knn(...).back().distance always includes that point.
    const double r2 = radius * radius * (1.0 + 1e-12);
    radius_recurse(0, query, r2, out);
    std::erase_if(out, [radius](const Neighbor& n) { return n.distance > radius; });
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    });
    return out;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
    Point3 lo, hi;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Point3 lo = points_[order_[begin]];
    Point3 hi = lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= kLeafSize) return id;

    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    nodes_[id].axis = axis;
    nodes_[id].split = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static double box_distance2(const Node& node, const Point3& q) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double v = q[a] < node.lo[a] ? node.lo[a] - q[a] : (q[a] > node.hi[a] ? q[a] - node.hi[a] : 0.0);
      d2 += v * v;
    }
    return d2;
  }

  void knn_recurse(std::int32_t id, const Point3& q, std::size_t k,
                   std::priority_queue<std::pair<double, std::uint32_t>>& heap) const {
    const Node& node = nodes_[id];
    // Equal box distance must still be visited: a tie may have a lower index.
    if (heap.size() == k && box_distance2(node, q) > heap.top().first) return;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const std::pair<double, std::uint32_t> cand{(points_[idx] - q).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const bool go_left = q[node.axis] < node.split;
    knn_recurse(go_left ? node.left : node.right, q, k, heap);
    knn_recurse(go_left ? node.right : node.left, q, k, heap);
  }

  void radius_recurse(std::int32_t id, const Point3& q, double r2, std::vector<Neighbor>& out) const {
    const Node& node = nodes_[id];
    if (box_distance2(node, q) > r2) return;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx, std::sqrt(d2)});
      }
      return;
    }
    radius_recurse(node.left, q, r2, out);
    radius_recurse(node.right, q, r2, out);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

inline std::vector<Neighbor> knn(const PointCloud& cloud, const Point3& query, std::size_t k) {
  return KdTree(cloud).knn(query, k);
}

inline std::vector<Neighbor> radius_search(const PointCloud& cloud, const Point3& query, double radius) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidRadius, "radius must be > 0");
  return KdTree(cloud).radius_search(query, radius);
}

}  // namespace plant3d
