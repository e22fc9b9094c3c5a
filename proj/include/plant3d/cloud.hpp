#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "plant3d/error.hpp"

namespace plant3d {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// An ordered set of 3D positions. Order is the file order and is never
/// rearranged by any operation; indices into `points` are stable handles.
struct PointCloud {
  std::vector<Point3> points;
  std::string source_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
};

/// Mean nearest-distinct-neighbor spacing. All radius parameters in the
/// library are multiples of this value.
class CloudResolution {
 public:
  explicit CloudResolution(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      fail(ErrorKind::InvalidArgument, "cloud resolution must be positive and finite");
    }
  }
  double value() const { return value_; }
  double operator*(double mult) const { return value_ * mult; }

 private:
  double value_;
};

/// Per-point unit normals and surface variation. `defined[i] == 0` marks a
/// degenerate neighborhood; such entries hold a zero normal and must be
/// skipped by consumers.
struct NormalField {
  std::vector<Vec3> normals;
  std::vector<double> curvature;
  std::vector<unsigned char> defined;

  std::size_t size() const { return normals.size(); }
  bool is_defined(std::size_t i) const { return i < defined.size() && defined[i] != 0; }
};

inline bool all_finite(const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) return false;
  }
  return true;
}

inline Point3 centroid(const PointCloud& cloud) {
  Point3 c = Point3::Zero();
  for (const auto& p : cloud.points) c += p;
  return cloud.empty() ? c : Point3(c / static_cast<double>(cloud.size()));
}

inline double bounding_box_diagonal(const PointCloud& cloud) {
  if (cloud.empty()) return 0.0;
  Point3 lo = cloud.points.front();
  Point3 hi = lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

/// Applies x -> R x + t to every point.
inline PointCloud transformed(const PointCloud& cloud, const Mat3& rotation, const Vec3& translation = Vec3::Zero()) {
  PointCloud out;
  out.source_id = cloud.source_id;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.emplace_back(rotation * p + translation);
  return out;
}

}  // namespace plant3d
