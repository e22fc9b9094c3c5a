#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "plant3d/cloud.hpp"
#include "plant3d/detectors.hpp"
#include "plant3d/kdtree.hpp"
#include "plant3d/normals.hpp"

namespace plant3d {

inline constexpr std::size_t kSiftDescriptorSize = 128;  // 4 delta x 4 phi x 8 theta
inline constexpr std::size_t kShotDescriptorSize = 352;  // 32 sectors x 11 cosine bins

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Dominant direction of a keypoint's neighborhood, in degrees.
struct Orientation {
  double alpha = 0.0;  // azimuth, [0, 360)
  double beta = 0.0;   // elevation, [-90, 90]
};

/// Per-neighbor quantities binned by the SIFT descriptor; angles in degrees.
struct NeighborSample {
  double m = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  double delta = 0.0;
};

struct SupportRegion {
  double r = 0.0;
  double r_max = 0.0;
  std::vector<Neighbor> members;
};

struct LocalReferenceFrame {
  Vec3 x_axis = Vec3::UnitX();
  Vec3 y_axis = Vec3::UnitY();
  Vec3 z_axis = Vec3::UnitZ();
};

/// `refine_orientation` replaces the raw histogram peak with the mean
/// direction under the 3x3-smoothed peak; `soft_binning` splits each sample
/// trilinearly between adjacent (theta, phi, delta) bins.
struct SiftDescriptorParams {
  double radius_mult = 8.0;
  std::size_t min_neighbors = 5;
  bool refine_orientation = true;
  bool soft_binning = true;
};

struct ShotParams {
  double radius_mult = 8.0;
  std::size_t min_neighbors = 5;
};

// ---------------------------------------------------------------------------
// Shared geometry

/// Azimuth in [0, 360) and elevation in [-90, 90] of a nonzero vector.
inline std::pair<double, double> spherical_angles_deg(const Vec3& v) {
  double theta = std::atan2(v.y(), v.x()) * kRadToDeg;
  if (theta < 0.0) theta += 360.0;
  if (theta >= 360.0) theta = 0.0;
  const double phi = std::asin(std::clamp(v.z() / v.norm(), -1.0, 1.0)) * kRadToDeg;
  return {theta, phi};
}

/// Half-open binning of [lo, hi) into `count` bins, the top edge clamped
/// into the last bin.
inline std::size_t angle_bin(double value, double lo, double width, std::size_t count) {
  const double b = std::floor((value - lo) / width);
  if (!(b > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(b), count - 1);
}

/// Points within `r` of the keypoint, excluding the keypoint's own point and
/// any coincident point (zero offset has no direction).
inline SupportRegion make_support(const PointCloud& cloud, const KdTree& tree, const Keypoint& keypoint, double r) {
  SupportRegion s;
  s.r = r;
  for (const auto& nb : tree.radius_search(keypoint.position, r)) {
    if (static_cast<long>(nb.index) == keypoint.source_index || nb.distance <= 0.0) continue;
    s.members.push_back(nb);
    s.r_max = std::max(s.r_max, nb.distance);
  }
  (void)cloud;
  return s;
}

// ---------------------------------------------------------------------------
// Rotation-invariant 3D SIFT

/// Peak of the 36 x 18 histogram (10 degree bins in azimuth x elevation) of
/// keypoint-to-neighbor directions, each neighbor weighted by
/// exp(-2 d / r_max). Returns bin-center angles. Ties go to the lower
/// azimuth bin, then the lower elevation bin.
inline Orientation dominant_orientation(const Keypoint& keypoint, const SupportRegion& support,
                                        const PointCloud& cloud, std::size_t min_neighbors = 5) {
  if (support.members.size() < min_neighbors) {
    fail(ErrorKind::TooFewNeighbors, "orientation needs at least " + std::to_string(min_neighbors) + " neighbors");
  }
  std::array<double, 36 * 18> hist{};
  for (const auto& nb : support.members) {
    const auto [theta, phi] = spherical_angles_deg(cloud[nb.index] - keypoint.position);
    const std::size_t tb = angle_bin(theta, 0.0, 10.0, 36);
    const std::size_t pb = angle_bin(phi, -90.0, 10.0, 18);
    hist[tb * 18 + pb] += std::exp(-2.0 * nb.distance / support.r_max);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < hist.size(); ++i) {
    if (hist[i] > hist[best]) best = i;
  }
  return {static_cast<double>(best / 18) * 10.0 + 5.0, static_cast<double>(best % 18) * 10.0 - 90.0 + 5.0};
}

/// Rotation by azimuth alpha about z composed with elevation beta:
///
///   [ ca*cb  -sa  -ca*sb ]
///   [ sa*cb   ca  -sa*sb ]
///   [ sb      0    cb    ]
///
/// It maps the x axis onto the direction (alpha, beta).
inline Mat3 rotation_to_frame(const Orientation& o) {
  const double ca = std::cos(o.alpha * kDegToRad), sa = std::sin(o.alpha * kDegToRad);
  const double cb = std::cos(o.beta * kDegToRad), sb = std::sin(o.beta * kDegToRad);
  Mat3 r;
  r << ca * cb, -sa, -ca * sb,
       sa * cb, ca, -sa * sb,
       sb, 0.0, cb;
  return r;
}

/// Angle between v and n in degrees, [0, 180].
inline double delta_angle(const Vec3& v, const Vec3& n) {
  const double nv = v.norm();
  const double nn = n.norm();
  if (!(nv > 0.0) || !(nn > 0.0)) fail(ErrorKind::ZeroVector, "delta angle of a zero vector");
  // atan2 keeps full precision near 0 and 180 degrees, where acos does not.
  return std::atan2(v.cross(n).norm(), v.dot(n)) * kRadToDeg;
}

/// Flat index of a (theta, phi, delta) cell in the 128-bin layout
/// [delta][phi][theta].
inline std::size_t sift_bin_index(const NeighborSample& s) {
  const std::size_t tb = angle_bin(s.theta, 0.0, 45.0, 8);
  const std::size_t pb = angle_bin(s.phi, -90.0, 45.0, 4);
  const std::size_t db = angle_bin(s.delta, 0.0, 45.0, 4);
  return (db * 4 + pb) * 8 + tb;
}

/// Dominant direction from the orientation histogram smoothed by a 3x3 box
/// (azimuth wraps, elevation does not), taken as the weighted mean unit
/// direction of the samples under the smoothed peak.
inline Orientation refined_orientation(const Keypoint& keypoint, const SupportRegion& support,
                                       const PointCloud& cloud, std::size_t min_neighbors = 5) {
  if (support.members.size() < min_neighbors) {
    fail(ErrorKind::TooFewNeighbors, "orientation needs at least " + std::to_string(min_neighbors) + " neighbors");
  }
  std::array<double, 36 * 18> hist{};
  std::array<Vec3, 36 * 18> mass;
  mass.fill(Vec3::Zero());
  for (const auto& nb : support.members) {
    const Vec3 v = cloud[nb.index] - keypoint.position;
    const auto [theta, phi] = spherical_angles_deg(v);
    const std::size_t b = angle_bin(theta, 0.0, 10.0, 36) * 18 + angle_bin(phi, -90.0, 10.0, 18);
    const double w = std::exp(-2.0 * nb.distance / support.r_max);
    hist[b] += w;
    mass[b] += w * v.normalized();
  }
  auto window = [&](int a, int e, auto&& visit) {
    for (int da = -1; da <= 1; ++da) {
      for (int de = -1; de <= 1; ++de) {
        const int ee = e + de;
        if (ee < 0 || ee >= 18) continue;
        visit(static_cast<std::size_t>(((a + da + 36) % 36) * 18 + ee));
      }
    }
  };
  int best_a = 0, best_e = 0;
  double best = -1.0;
  for (int a = 0; a < 36; ++a) {
    for (int e = 0; e < 18; ++e) {
      double sum = 0.0;
      window(a, e, [&](std::size_t b) { sum += hist[b]; });
      if (sum > best) {
        best = sum;
        best_a = a;
        best_e = e;
      }
    }
  }
  Vec3 m = Vec3::Zero();
  window(best_a, best_e, [&](std::size_t b) { m += mass[b]; });
  if (!(m.norm() > 0.0)) return {best_a * 10.0 + 5.0, best_e * 10.0 - 85.0};
  const auto [alpha, beta] = spherical_angles_deg(m);
  return {alpha, beta};
}

/// Canonical frame of a keypoint: the dominant direction becomes +x and the
/// keypoint normal lies in the +z half of the x-z plane. The frame is the
/// inverse of `rotation_to_frame`, followed by a roll about x.
inline Mat3 sift_canonical_frame(const Orientation& o, const Vec3& normal) {
  const Mat3 to_dominant = rotation_to_frame(o).transpose();
  const Vec3 n = to_dominant * normal;
  const double roll = std::atan2(n.y(), n.z());
  const Eigen::AngleAxisd about_x(roll, Vec3::UnitX());
  return about_x.toRotationMatrix() * to_dominant;
}

namespace detail {

/// Trilinear split of weight w over the bin centers around (theta, phi,
/// delta); theta wraps, phi and delta clamp at their ends.
inline void accumulate_soft(std::vector<double>& desc, const NeighborSample& s, double w) {
  const double ft = s.theta / 45.0 - 0.5;
  const double fp = (s.phi + 90.0) / 45.0 - 0.5;
  const double fd = s.delta / 45.0 - 0.5;
  const int t0 = static_cast<int>(std::floor(ft));
  const int p0 = static_cast<int>(std::floor(fp));
  const int d0 = static_cast<int>(std::floor(fd));
  const double wt[2] = {1.0 - (ft - t0), ft - t0};
  const double wp[2] = {1.0 - (fp - p0), fp - p0};
  const double wd[2] = {1.0 - (fd - d0), fd - d0};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 2; ++c) {
        const int ti = ((t0 + a) % 8 + 8) % 8;
        const int pi = std::clamp(p0 + b, 0, 3);
        const int di = std::clamp(d0 + c, 0, 3);
        desc[static_cast<std::size_t>((di * 4 + pi) * 8 + ti)] += w * wt[a] * wp[b] * wd[c];
      }
    }
  }
}

}  // namespace detail

inline std::vector<double> describe_sift3d(const PointCloud& cloud, const KdTree& tree, const NormalField& normals,
                                           const Keypoint& keypoint, double r,
                                           const SiftDescriptorParams& params = {}) {
  if (keypoint.source_index < 0 || !normals.is_defined(static_cast<std::size_t>(keypoint.source_index))) {
    fail(ErrorKind::UndefinedNormal, "keypoint has no defined normal");
  }
  const SupportRegion support = make_support(cloud, tree, keypoint, r);
  const Orientation o = params.refine_orientation
                            ? refined_orientation(keypoint, support, cloud, params.min_neighbors)
                            : dominant_orientation(keypoint, support, cloud, params.min_neighbors);
  const Vec3& n = normals.normals[static_cast<std::size_t>(keypoint.source_index)];
  const Mat3 frame = sift_canonical_frame(o, n);
  const Vec3 n_rot = frame * n;
  const Vec3 p_rot = frame * keypoint.position;

  std::vector<double> desc(kSiftDescriptorSize, 0.0);
  for (const auto& nb : support.members) {
    const Vec3 v = frame * cloud[nb.index] - p_rot;
    const auto [theta, phi] = spherical_angles_deg(v);
    const NeighborSample sample{v.norm(), theta, phi, delta_angle(v, n_rot)};
    const double w = sample.m * std::exp(-2.0 * nb.distance / support.r_max);
    if (params.soft_binning) {
      detail::accumulate_soft(desc, sample, w);
    } else {
      desc[sift_bin_index(sample)] += w;
    }
  }
  const double norm = std::sqrt(std::inner_product(desc.begin(), desc.end(), desc.begin(), 0.0));
  for (auto& v : desc) v /= norm;
  return desc;
}

// ---------------------------------------------------------------------------
// SHOT

/// Distance-weighted scatter about q over points within r:
/// C = sum (r - d_i)(q_i - q)(q_i - q)^T / sum (r - d_i).
inline Mat3 weighted_covariance(const Point3& q, const std::vector<Point3>& neighbors, double r) {
  Mat3 c = Mat3::Zero();
  double total = 0.0;
  for (const auto& qi : neighbors) {
    const Vec3 d = qi - q;
    const double dist = d.norm();
    if (dist > r) continue;
    const double w = r - dist;
    c.noalias() += w * (d * d.transpose());
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorKind::DegenerateNeighborhood, "no weighted support");
  return c / total;
}

/// Repeatable frame from the weighted covariance. z is the least-variance
/// direction, x the greatest; each is flipped to face the majority of the
/// support (a tie keeps the solver's sign) and y = z x x.
inline LocalReferenceFrame compute_shot_lrf(const Point3& q, const std::vector<Point3>& neighbors, double r) {
  const auto eig = eigen_descending(weighted_covariance(q, neighbors, r));
  const double l1 = eig.values[0], l2 = eig.values[1], l3 = eig.values[2];
  if (!(l1 > 0.0) || l2 < 1e-9 * l1 || (l2 - l3) < 1e-9 * l1) {
    fail(ErrorKind::DegenerateNeighborhood, "local reference frame is not unique");
  }
  Vec3 x = eig.vectors.col(0).normalized();
  Vec3 z = eig.vectors.col(2).normalized();
  auto majority = [&](const Vec3& axis) {
    long balance = 0;
    for (const auto& qi : neighbors) {
      const Vec3 d = qi - q;
      if (d.norm() > r) continue;
      const double s = axis.dot(d);
      balance += (s > 0.0) - (s < 0.0);
    }
    return balance;
  };
  if (majority(x) < 0) x = -x;
  if (majority(z) < 0) z = -z;
  LocalReferenceFrame lrf;
  lrf.x_axis = x;
  lrf.z_axis = z;
  lrf.y_axis = z.cross(x).normalized();
  return lrf;
}

inline LocalReferenceFrame compute_shot_lrf(const PointCloud& cloud, const KdTree& tree, const Keypoint& keypoint,
                                            double r) {
  std::vector<Point3> pts;
  for (const auto& nb : tree.radius_search(keypoint.position, r)) pts.push_back(cloud[nb.index]);
  return compute_shot_lrf(keypoint.position, pts, r);
}

/// Sector of a point given in LRF coordinates: 8 azimuth x 2 elevation x 2
/// radial (split at r/2), numbered (azimuth * 2 + elevation) * 2 + radial.
inline std::size_t shot_sector(const Vec3& local, double distance, double r) {
  double az = std::atan2(local.y(), local.x()) * kRadToDeg;
  if (az < 0.0) az += 360.0;
  const std::size_t ab = angle_bin(az, 0.0, 45.0, 8);
  const std::size_t eb = local.z() >= 0.0 ? 1 : 0;
  const std::size_t rb = distance >= r / 2.0 ? 1 : 0;
  return (ab * 2 + eb) * 2 + rb;
}

inline std::size_t shot_cosine_bin(double cos_theta) {
  return angle_bin(std::clamp(cos_theta, -1.0, 1.0), -1.0, 2.0 / 11.0, 11);
}

inline std::vector<double> describe_shot(const PointCloud& cloud, const KdTree& tree, const NormalField& normals,
                                         const Keypoint& keypoint, double r, const ShotParams& params = {}) {
  const LocalReferenceFrame lrf = compute_shot_lrf(cloud, tree, keypoint, r);
  const SupportRegion support = make_support(cloud, tree, keypoint, r);
  std::vector<double> desc(kShotDescriptorSize, 0.0);
  std::size_t used = 0;
  for (const auto& nb : support.members) {
    if (!normals.is_defined(nb.index)) continue;
    const Vec3 d = cloud[nb.index] - keypoint.position;
    const Vec3 local(lrf.x_axis.dot(d), lrf.y_axis.dot(d), lrf.z_axis.dot(d));
    const std::size_t sector = shot_sector(local, nb.distance, r);
    const double cos_theta = normals.normals[nb.index].dot(lrf.z_axis);
    desc[sector * 11 + shot_cosine_bin(cos_theta)] += 1.0;
    ++used;
  }
  if (used < params.min_neighbors) {
    fail(ErrorKind::TooFewNeighbors, "SHOT needs at least " + std::to_string(params.min_neighbors) +
                                         " neighbors with normals");
  }
  const double norm = std::sqrt(std::inner_product(desc.begin(), desc.end(), desc.begin(), 0.0));
  for (auto& v : desc) v /= norm;
  return desc;
}

// ---------------------------------------------------------------------------
// Batch description

enum class DescriptorKind { Sift, Shot };

inline std::string to_string(DescriptorKind k) { return k == DescriptorKind::Sift ? "sift" : "shot"; }

inline DescriptorKind descriptor_kind_from_string(const std::string& s) {
  if (s == "sift") return DescriptorKind::Sift;
  if (s == "shot") return DescriptorKind::Shot;
  fail(ErrorKind::InvalidArgument, "unknown descriptor '" + s + "'");
}

inline std::size_t descriptor_size(DescriptorKind k) {
  return k == DescriptorKind::Sift ? kSiftDescriptorSize : kShotDescriptorSize;
}

struct DescriptorParams {
  SiftDescriptorParams sift;
  ShotParams shot;
};

/// Row i describes keypoints[kept[i]]. Keypoints whose neighborhood cannot
/// support a descriptor (too few neighbors, no normal, degenerate frame) are
/// dropped and counted.
struct DescriptorSet {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows;
  std::vector<std::size_t> kept;
  std::size_t dropped = 0;
};

inline DescriptorSet describe_keypoints(const PointCloud& cloud, const KdTree& tree, const NormalField& normals,
                                        const std::vector<Keypoint>& keypoints, DescriptorKind kind,
                                        CloudResolution res, const DescriptorParams& params = {}) {
  const std::size_t dim = descriptor_size(kind);
  std::vector<std::vector<double>> rows;
  DescriptorSet out;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    try {
      if (kind == DescriptorKind::Sift) {
        rows.push_back(describe_sift3d(cloud, tree, normals, keypoints[i], res * params.sift.radius_mult, params.sift));
      } else {
        rows.push_back(describe_shot(cloud, tree, normals, keypoints[i], res * params.shot.radius_mult, params.shot));
      }
      out.kept.push_back(i);
    } catch (const Error& e) {
      const ErrorKind k = e.kind();
      if (k != ErrorKind::TooFewNeighbors && k != ErrorKind::UndefinedNormal &&
          k != ErrorKind::DegenerateNeighborhood) {
        throw;
      }
      ++out.dropped;
    }
  }
  out.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) out.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

}  // namespace plant3d
