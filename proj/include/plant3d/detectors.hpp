#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <unordered_map>
#include <vector>

#include "plant3d/cloud.hpp"
#include "plant3d/kdtree.hpp"
#include "plant3d/normals.hpp"

namespace plant3d {

struct Keypoint {
  Point3 position = Point3::Zero();
  double scale = 1.0;     // detection radius (Harris, ISS) or DoG sigma (SIFT)
  double saliency = 0.0;  // detector response used for ranking
  long source_index = -1; // index into the cloud, -1 if not a cloud point
};

struct HarrisParams {
  double radius_mult = 3.0;
  double k = 0.04;
  double threshold_rel = 0.01;
  double nms_radius_mult = 2.0;
};

struct IssParams {
  double salient_radius_mult = 6.0;
  double nms_radius_mult = 4.0;
  double gamma_21 = 0.975;
  double gamma_32 = 0.975;
  std::size_t min_neighbors = 5;
};

struct SiftDetectorParams {
  double min_scale_mult = 2.0;
  int n_octaves = 4;
  int scales_per_octave = 4;
  double min_contrast = 1e-4;
  double curvature_reject_ratio = 10.0;
};

// ---------------------------------------------------------------------------
// Non-maximum suppression

/// Greedy suppression: strongest first (ties to the lower source index); a
/// candidate survives iff no survivor lies within `radius`. Survivors are
/// pairwise farther apart than `radius`.
inline std::vector<Keypoint> non_max_suppression(std::vector<Keypoint> candidates, double radius) {
  if (!(radius > 0.0)) fail(ErrorKind::InvalidRadius, "suppression radius must be > 0");
  std::stable_sort(candidates.begin(), candidates.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.saliency > b.saliency || (a.saliency == b.saliency && a.source_index < b.source_index);
  });

  struct CellHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& c) const {
      return static_cast<std::size_t>(c[0] * 73856093LL ^ c[1] * 19349663LL ^ c[2] * 83492791LL);
    }
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::size_t>, CellHash> grid;
  auto cell_of = [radius](const Point3& p) {
    return std::array<std::int64_t, 3>{static_cast<std::int64_t>(std::floor(p.x() / radius)),
                                       static_cast<std::int64_t>(std::floor(p.y() / radius)),
                                       static_cast<std::int64_t>(std::floor(p.z() / radius))};
  };

  std::vector<Keypoint> kept;
  for (const auto& cand : candidates) {
    const auto c = cell_of(cand.position);
    bool suppressed = false;
    for (int dx = -1; dx <= 1 && !suppressed; ++dx) {
      for (int dy = -1; dy <= 1 && !suppressed; ++dy) {
        for (int dz = -1; dz <= 1 && !suppressed; ++dz) {
          const auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (std::size_t k : it->second) {
            if ((kept[k].position - cand.position).norm() <= radius) {
              suppressed = true;
              break;
            }
          }
        }
      }
    }
    if (suppressed) continue;
    grid[c].push_back(kept.size());
    kept.push_back(cand);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Harris3D

/// Harris response from the Gaussian-weighted second-moment matrix of the
/// neighbors' unit normals. The matrix is an unnormalized sum: normalizing
/// by total weight pins its trace to 1 and its determinant to at most 1/27,
/// which keeps det - k*trace^2 negative everywhere for k = 0.04.
inline double harris_response(const PointCloud& cloud, const NormalField& normals, const KdTree& tree,
                              std::size_t index, double radius, double k) {
  const double sigma = radius / 2.0;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  Mat3 m = Mat3::Zero();
  for (const auto& nb : tree.radius_search(cloud[index], radius)) {
    if (!normals.is_defined(nb.index)) continue;
    const Vec3& n = normals.normals[nb.index];
    m.noalias() += std::exp(-nb.distance * nb.distance * inv_two_sigma2) * (n * n.transpose());
  }
  const double trace = m.trace();
  return m.determinant() - k * trace * trace;
}

inline std::vector<Keypoint> detect_harris3d(const PointCloud& cloud, const KdTree& tree, const NormalField& normals,
                                             const HarrisParams& params, const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "Harris3D on empty cloud");
  if (normals.size() != cloud.size() ||
      std::none_of(normals.defined.begin(), normals.defined.end(), [](unsigned char d) { return d != 0; })) {
    fail(ErrorKind::NoNormals, "Harris3D needs a normal field for the same cloud");
  }
  if (!(params.radius_mult > 0.0) || !(params.threshold_rel > 0.0) || params.threshold_rel > 1.0) {
    fail(ErrorKind::InvalidArgument, "invalid Harris parameters");
  }
  const double radius = res * params.radius_mult;
  std::vector<double> response(cloud.size(), -std::numeric_limits<double>::infinity());
  double max_response = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!normals.is_defined(i)) continue;
    response[i] = harris_response(cloud, normals, tree, i, radius, params.k);
    max_response = std::max(max_response, response[i]);
  }
  if (!(max_response > 0.0)) return {};

  const double threshold = params.threshold_rel * max_response;
  std::vector<Keypoint> candidates;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (response[i] > 0.0 && response[i] >= threshold) {
      candidates.push_back({cloud[i], radius, response[i], static_cast<long>(i)});
    }
  }
  return non_max_suppression(std::move(candidates), res * params.nms_radius_mult);
}

inline std::vector<Keypoint> detect_harris3d(const PointCloud& cloud, const NormalField& normals,
                                             const HarrisParams& params, const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "Harris3D on empty cloud");
  return detect_harris3d(cloud, KdTree(cloud), normals, params, res);
}

// ---------------------------------------------------------------------------
// ISS

/// Scatter of the neighborhood about the query point itself.
inline Mat3 iss_scatter(const PointCloud& cloud, std::size_t index, const std::vector<Neighbor>& nbrs) {
  Mat3 scatter = Mat3::Zero();
  for (const auto& nb : nbrs) {
    const Vec3 d = cloud[nb.index] - cloud[index];
    scatter.noalias() += d * d.transpose();
  }
  return scatter / static_cast<double>(nbrs.size());
}

/// Saliency (smallest scatter eigenvalue) of point `index` if it passes the
/// neighbor-count and successive-eigenvalue-ratio tests. Locally planar
/// neighborhoods (lambda3 ~ 0) carry no saliency and are rejected.
inline std::optional<double> iss_saliency(const PointCloud& cloud, const KdTree& tree, std::size_t index,
                                          const IssParams& params, double salient_radius) {
  const auto nbrs = tree.radius_search(cloud[index], salient_radius);
  if (nbrs.size() < params.min_neighbors + 1) return std::nullopt;  // +1: the point itself
  const auto eig = eigen_descending(iss_scatter(cloud, index, nbrs));
  const double l1 = eig.values[0], l2 = eig.values[1], l3 = eig.values[2];
  if (!(l1 > 0.0) || !(l2 > 0.0) || !(l3 > 1e-9 * l1)) return std::nullopt;
  if (l2 / l1 >= params.gamma_21 || l3 / l2 >= params.gamma_32) return std::nullopt;
  return l3;
}

inline std::vector<Keypoint> detect_iss(const PointCloud& cloud, const KdTree& tree, const IssParams& params,
                                        const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "ISS on empty cloud");
  if (!(params.gamma_21 > 0.0 && params.gamma_21 < 1.0 && params.gamma_32 > 0.0 && params.gamma_32 < 1.0) ||
      params.min_neighbors < 3) {
    fail(ErrorKind::InvalidArgument, "invalid ISS parameters");
  }
  const double salient_radius = res * params.salient_radius_mult;
  std::vector<Keypoint> candidates;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (const auto s = iss_saliency(cloud, tree, i, params, salient_radius)) {
      candidates.push_back({cloud[i], salient_radius, *s, static_cast<long>(i)});
    }
  }
  return non_max_suppression(std::move(candidates), res * params.nms_radius_mult);
}

inline std::vector<Keypoint> detect_iss(const PointCloud& cloud, const IssParams& params, const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "ISS on empty cloud");
  return detect_iss(cloud, KdTree(cloud), params, res);
}

// ---------------------------------------------------------------------------
// SIFT3D

/// Gaussian kernel density of the cloud evaluated at every cloud point over
/// a geometric ladder of sigmas, and the normalized differences between
/// adjacent levels.
struct DensityScaleSpace {
  std::vector<double> sigmas;                // size L + 1
  std::vector<std::vector<double>> density;  // [level][point], size L + 1
  std::vector<std::vector<double>> dog;      // [level][point], size L; dog[j] = (D[j+1] - D[j]) / n
};

/// Above this size the density is accumulated from kd-tree neighborhoods
/// truncated where the kernel drops below e^-40 instead of over all pairs.
inline constexpr std::size_t kExactDensityMaxPoints = 50000;

inline std::vector<double> sift_sigma_ladder(const SiftDetectorParams& params, const CloudResolution& res) {
  if (params.n_octaves < 1 || params.scales_per_octave < 2 || !(params.min_scale_mult > 0.0) ||
      !std::isfinite(params.min_scale_mult)) {
    fail(ErrorKind::BadScaleLadder, "scale ladder must be strictly increasing and positive");
  }
  // Searched DoG levels are 1..n_octaves*scales_per_octave, each needing one
  // level above and below, so the ladder has n_octaves*spo + 3 sigmas.
  const int levels = params.n_octaves * params.scales_per_octave + 3;
  std::vector<double> sigmas(levels);
  const double base = res * params.min_scale_mult;
  for (int m = 0; m < levels; ++m) {
    sigmas[m] = base * std::exp2(static_cast<double>(m) / params.scales_per_octave);
    if (m > 0 && !(sigmas[m] > sigmas[m - 1])) fail(ErrorKind::BadScaleLadder, "non-increasing sigma ladder");
  }
  return sigmas;
}

inline DensityScaleSpace build_density_scale_space(const PointCloud& cloud, const KdTree& tree,
                                                   std::vector<double> sigmas, const CloudResolution& res) {
  const double res2 = res.value() * res.value();
  constexpr double kCutoff = 40.0;  // exp(-40) is below half an ulp of any density value (>= 1)
  const std::size_t n = cloud.size();
  const std::size_t levels = sigmas.size();
  DensityScaleSpace ss;
  ss.density.assign(levels, std::vector<double>(n, 1.0));  // self term
  std::vector<double> inv(levels);
  for (std::size_t m = 0; m < levels; ++m) inv[m] = 1.0 / (2.0 * sigmas[m] * sigmas[m]);

  if (n <= kExactDensityMaxPoints) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = i + 1; k < n; ++k) {
        const double d2 = (cloud[i] - cloud[k]).squaredNorm();
        // inv[] decreases with m: walk down from the widest kernel until the term vanishes.
        for (std::size_t m = levels; m-- > 0;) {
          const double t = d2 * inv[m];
          if (t >= kCutoff) break;
          const double e = std::exp(-t);
          ss.density[m][i] += e;
          ss.density[m][k] += e;
        }
      }
    }
  } else {
    for (std::size_t m = 0; m < levels; ++m) {
      const double cutoff_radius = std::sqrt(kCutoff / inv[m]);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const auto& nb : tree.radius_search(cloud[i], cutoff_radius)) {
          if (nb.index != i) sum += std::exp(-nb.distance * nb.distance * inv[m]);
        }
        ss.density[m][i] += sum;
      }
    }
  }

  // Dividing by the kernel's mass over a flat sheet (2 pi sigma^2) makes the
  // response scale-free on smooth surfaces; res^2 makes it dimensionless.
  for (std::size_t m = 0; m < levels; ++m) {
    const double norm = res2 / (2.0 * std::numbers::pi * sigmas[m] * sigmas[m]);
    for (auto& v : ss.density[m]) v *= norm;
  }
  ss.dog.assign(levels - 1, std::vector<double>(n));
  for (std::size_t j = 0; j + 1 < levels; ++j) {
    for (std::size_t i = 0; i < n; ++i) ss.dog[j][i] = ss.density[j + 1][i] - ss.density[j][i];
  }
  ss.sigmas = std::move(sigmas);
  return ss;
}

/// Spatial Hessian of dog[level] at `x`, evaluated analytically from the
/// Gaussian kernels.
inline Mat3 dog_hessian(const PointCloud& cloud, const DensityScaleSpace& ss, std::size_t level, const Point3& x) {
  const double s_lo = ss.sigmas[level];
  const double s_hi = ss.sigmas[level + 1];
  auto kernel_hessian = [](const Vec3& u, double sigma) -> Mat3 {
    const double s2 = sigma * sigma;
    const double g = std::exp(-u.squaredNorm() / (2.0 * s2));
    return g * (u * u.transpose() / (s2 * s2) - Mat3::Identity() / s2);
  };
  const double w_hi = 1.0 / (s_hi * s_hi);
  const double w_lo = 1.0 / (s_lo * s_lo);
  Mat3 h = Mat3::Zero();
  for (const auto& p : cloud.points) {
    const Vec3 u = x - p;
    h += w_hi * kernel_hessian(u, s_hi) - w_lo * kernel_hessian(u, s_lo);
  }
  return h;
}

/// True iff the DoG Hessian at the point is well conditioned enough: the
/// ratio of largest to smallest absolute eigenvalue stays within `max_ratio`.
inline bool passes_curvature_test(const Mat3& hessian, double max_ratio) {
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(hessian, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  return lo > 0.0 && hi / lo <= max_ratio;
}

inline std::vector<Keypoint> detect_sift3d(const PointCloud& cloud, const KdTree& tree,
                                           const SiftDetectorParams& params, const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "SIFT3D on empty cloud");
  if (cloud.size() < 10) fail(ErrorKind::TooFewPoints, "SIFT3D needs at least 10 points");
  const auto ss = build_density_scale_space(cloud, tree, sift_sigma_ladder(params, res), res);
  const std::size_t n = cloud.size();
  const std::size_t searched = static_cast<std::size_t>(params.n_octaves * params.scales_per_octave);

  // Best detection per source point across scales.
  std::vector<std::optional<Keypoint>> best(n);
  for (std::size_t j = 1; j <= searched; ++j) {
    const auto& cur = ss.dog[j];
    const auto& below = ss.dog[j - 1];
    const auto& above = ss.dog[j + 1];
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cur[i];
      if (std::abs(v) < params.min_contrast) continue;
      const bool try_max = v > below[i] && v > above[i];
      const bool try_min = v < below[i] && v < above[i];
      if (!try_max && !try_min) continue;
      bool is_max = try_max, is_min = try_min;
      for (const auto& nb : tree.radius_search(cloud[i], 2.0 * ss.sigmas[j])) {
        const std::size_t q = nb.index;
        if (q != i) {
          is_max = is_max && v > cur[q];
          is_min = is_min && v < cur[q];
        }
        is_max = is_max && v > below[q] && v > above[q];
        is_min = is_min && v < below[q] && v < above[q];
        if (!is_max && !is_min) break;
      }
      if (!is_max && !is_min) continue;
      if (!passes_curvature_test(dog_hessian(cloud, ss, j, cloud[i]), params.curvature_reject_ratio)) continue;
      const double saliency = std::abs(v);
      if (!best[i] || saliency > best[i]->saliency) {
        best[i] = Keypoint{cloud[i], ss.sigmas[j], saliency, static_cast<long>(i)};
      }
    }
  }

  std::vector<Keypoint> out;
  for (auto& kp : best) {
    if (kp) out.push_back(*kp);
  }
  std::stable_sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.saliency > b.saliency || (a.saliency == b.saliency && a.source_index < b.source_index);
  });
  return out;
}

inline std::vector<Keypoint> detect_sift3d(const PointCloud& cloud, const SiftDetectorParams& params,
                                           const CloudResolution& res) {
  if (cloud.empty()) fail(ErrorKind::EmptyCloud, "SIFT3D on empty cloud");
  return detect_sift3d(cloud, KdTree(cloud), params, res);
}

}  // namespace plant3d
