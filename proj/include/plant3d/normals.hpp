#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>
#include <vector>

#include "plant3d/cloud.hpp"
#include "plant3d/kdtree.hpp"

namespace plant3d {

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// descending (values[0] >= values[1] >= values[2]); column i of `vectors`
/// belongs to values[i].
struct SymmetricEigen3 {
  Vec3 values;
  Mat3 vectors;
};

inline SymmetricEigen3 eigen_descending(const Mat3& m) {
  const Eigen::SelfAdjointEigenSolver<Mat3> solver(m);
  SymmetricEigen3 out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Covariance about the mean of the selected neighbors.
inline Mat3 neighborhood_covariance(const std::vector<Point3>& points, std::span<const Neighbor> nbrs) {
  Vec3 mean = Vec3::Zero();
  for (const auto& n : nbrs) mean += points[n.index];
  mean /= static_cast<double>(nbrs.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& n : nbrs) {
    const Vec3 d = points[n.index] - mean;
    cov.noalias() += d * d.transpose();
  }
  return cov / static_cast<double>(nbrs.size());
}

/// Mean distance from each point to its nearest neighbor at a different
/// position. Invariant under rigid motion.
inline CloudResolution cloud_resolution(const PointCloud& cloud, const KdTree& tree) {
  if (cloud.size() < 2) fail(ErrorKind::TooFewPoints, "cloud resolution needs at least 2 points");
  double sum = 0.0;
  for (const auto& p : cloud.points) {
    double nearest = 0.0;
    for (std::size_t k = 2; k <= cloud.size(); k = std::min(cloud.size(), 2 * k)) {
      for (const auto& n : tree.knn(p, k)) {
        if (n.distance > 0.0) {
          nearest = n.distance;
          break;
        }
      }
      if (nearest > 0.0 || k == cloud.size()) break;
    }
    if (!(nearest > 0.0)) fail(ErrorKind::TooFewPoints, "cloud has fewer than 2 distinct positions");
    sum += nearest;
  }
  return CloudResolution(sum / static_cast<double>(cloud.size()));
}

inline CloudResolution cloud_resolution(const PointCloud& cloud) {
  if (cloud.size() < 2) fail(ErrorKind::TooFewPoints, "cloud resolution needs at least 2 points");
  return cloud_resolution(cloud, KdTree(cloud));
}

/// Sensor position assumed when none is given: high above the cloud.
inline Point3 default_viewpoint(const PointCloud& cloud) {
  return centroid(cloud) + Vec3(0.0, 0.0, 10.0 * bounding_box_diagonal(cloud));
}

/// Neighborhoods whose second eigenvalue falls below this fraction of the
/// first are treated as rank-deficient and get no normal.
inline constexpr double kDegenerateEigenRatio = 1e-9;

/// PCA normals from the k nearest neighbors (query point included),
/// oriented toward `viewpoint`. Curvature is lambda_min / trace.
inline NormalField estimate_normals(const PointCloud& cloud, const KdTree& tree, std::size_t k, const Point3& viewpoint) {
  if (k < 3 || k > cloud.size()) {
    fail(ErrorKind::InvalidK, "normal estimation needs 3 <= k <= n, got k=" + std::to_string(k));
  }
  NormalField field;
  field.normals.assign(cloud.size(), Vec3::Zero());
  field.curvature.assign(cloud.size(), 0.0);
  field.defined.assign(cloud.size(), 0);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = tree.knn(cloud[i], k);
    const auto eig = eigen_descending(neighborhood_covariance(tree.points(), nbrs));
    const double l1 = eig.values[0];
    const double l2 = eig.values[1];
    const double l3 = std::max(0.0, eig.values[2]);
    if (!(l1 > 0.0) || l2 < kDegenerateEigenRatio * l1) continue;

    Vec3 n = eig.vectors.col(2).normalized();
    if (n.dot(viewpoint - cloud[i]) < 0.0) n = -n;
    field.normals[i] = n;
    field.curvature[i] = l3 / (l1 + l2 + l3);
    field.defined[i] = 1;
  }
  return field;
}

inline NormalField estimate_normals(const PointCloud& cloud, std::size_t k, const Point3& viewpoint) {
  if (k < 3 || k > cloud.size()) {
    fail(ErrorKind::InvalidK, "normal estimation needs 3 <= k <= n, got k=" + std::to_string(k));
  }
  return estimate_normals(cloud, KdTree(cloud), k, viewpoint);
}

}  // namespace plant3d
