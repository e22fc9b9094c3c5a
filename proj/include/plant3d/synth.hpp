#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "plant3d/cloud.hpp"

namespace plant3d {

enum class SynthKind { Sphere, Plane, Box, Blob, Plantlike };

inline std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::Sphere: return "sphere";
    case SynthKind::Plane: return "plane";
    case SynthKind::Box: return "box";
    case SynthKind::Blob: return "blob";
    case SynthKind::Plantlike: return "plantlike";
  }
  return "?";
}

inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "sphere") return SynthKind::Sphere;
  if (s == "plane") return SynthKind::Plane;
  if (s == "box") return SynthKind::Box;
  if (s == "blob") return SynthKind::Blob;
  if (s == "plantlike" || s == "plant") return SynthKind::Plantlike;
  fail(ErrorKind::InvalidSpec, "unknown synthetic kind '" + s + "'");
}

struct PlantShape {
  double stem_height = 1.0;
  double stem_radius = 0.02;
  int n_leaves = 4;
  double leaf_length = 0.5;
  double leaf_width = 0.18;
  double leaf_elevation_deg = 20.0;  // tilt of the leaf axis above horizontal
  double leaf_droop = 0.3;           // downward bend, as a fraction of leaf length at the tip
  double first_azimuth_deg = 0.0;    // successive leaves follow the golden angle
};

/// Recipe for a seeded synthetic cloud. `radius` is the sphere radius or
/// plane disc radius; `extents` the box edge lengths; `blob_stdev` the
/// isotropic Gaussian spread.
struct SynthSpec {
  SynthKind kind = SynthKind::Sphere;
  std::size_t n_points = 1000;
  double radius = 1.0;
  Vec3 extents = Vec3::Ones();
  double blob_stdev = 1.0;
  PlantShape plant;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void sample_plant(const SynthSpec& spec, std::mt19937_64& rng, std::vector<Point3>& out) {
  const PlantShape& ps = spec.plant;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pi = std::numbers::pi;

  const double stem_area = 2.0 * pi * ps.stem_radius * ps.stem_height;
  const double leaf_area = pi * (ps.leaf_length / 2.0) * (ps.leaf_width / 2.0);
  const double total = stem_area + ps.n_leaves * leaf_area;
  const auto stem_n = static_cast<std::size_t>(std::round(spec.n_points * stem_area / total));

  for (std::size_t i = 0; i < stem_n; ++i) {
    const double a = 2.0 * pi * unit(rng);
    out.emplace_back(ps.stem_radius * std::cos(a), ps.stem_radius * std::sin(a), ps.stem_height * unit(rng));
  }

  const std::size_t leaf_points = spec.n_points - stem_n;
  const double golden = pi * (3.0 - std::sqrt(5.0));
  const double elev = ps.leaf_elevation_deg * pi / 180.0;
  for (int leaf = 0; leaf < ps.n_leaves; ++leaf) {
    const std::size_t count = leaf_points / ps.n_leaves + (static_cast<std::size_t>(leaf) < leaf_points % ps.n_leaves ? 1 : 0);
    const double az = ps.first_azimuth_deg * pi / 180.0 + golden * leaf;
    const double height = ps.stem_height * (0.3 + 0.65 * (leaf + 0.5) / ps.n_leaves);
    const Vec3 axis(std::cos(az) * std::cos(elev), std::sin(az) * std::cos(elev), std::sin(elev));
    const Vec3 across(-std::sin(az), std::cos(az), 0.0);
    const Vec3 base = Vec3(std::cos(az), std::sin(az), 0.0) * ps.stem_radius + Vec3(0.0, 0.0, height);
    const double half_l = ps.leaf_length / 2.0;
    const double half_w = ps.leaf_width / 2.0;
    for (std::size_t i = 0; i < count;) {
      const double u = ps.leaf_length * unit(rng);
      const double v = ps.leaf_width * (unit(rng) - 0.5);
      const double eu = (u - half_l) / half_l;
      const double ev = v / half_w;
      if (eu * eu + ev * ev > 1.0) continue;
      const double droop = ps.leaf_droop * u * u / ps.leaf_length;
      out.push_back(base + u * axis + v * across - Vec3(0.0, 0.0, droop));
      ++i;
    }
  }
}

}  // namespace detail

/// Deterministic sampling: identical spec (seed included) gives identical
/// clouds.
inline PointCloud synth_cloud(const SynthSpec& spec) {
  if (spec.n_points < 10) fail(ErrorKind::InvalidSpec, "n_points must be >= 10");
  if (!(spec.noise >= 0.0)) fail(ErrorKind::InvalidSpec, "noise must be >= 0");
  if (!(spec.radius > 0.0) || !(spec.blob_stdev > 0.0) || !(spec.extents.minCoeff() > 0.0)) {
    fail(ErrorKind::InvalidSpec, "shape dimensions must be positive");
  }
  if (spec.kind == SynthKind::Plantlike &&
      (spec.plant.n_leaves < 1 || !(spec.plant.leaf_length > 0.0) || !(spec.plant.leaf_width > 0.0) ||
       !(spec.plant.stem_height > 0.0) || !(spec.plant.stem_radius > 0.0))) {
    fail(ErrorKind::InvalidSpec, "plant shape dimensions must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::numbers::pi;

  PointCloud cloud;
  cloud.source_id = "synth:" + to_string(spec.kind) + ":" + std::to_string(spec.seed);
  auto& pts = cloud.points;
  pts.reserve(spec.n_points);

  switch (spec.kind) {
    case SynthKind::Sphere:
      while (pts.size() < spec.n_points) {
        Vec3 g(gauss(rng), gauss(rng), gauss(rng));
        const double len = g.norm();
        if (len < 1e-12) continue;
        pts.push_back(g / len * spec.radius);
      }
      break;
    case SynthKind::Plane:
      for (std::size_t i = 0; i < spec.n_points; ++i) {
        const double r = spec.radius * std::sqrt(unit(rng));
        const double a = 2.0 * pi * unit(rng);
        pts.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
      }
      break;
    case SynthKind::Box: {
      const Vec3& e = spec.extents;
      const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};  // faces normal to x, y, z
      const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
      for (std::size_t i = 0; i < spec.n_points; ++i) {
        double pick = unit(rng) * total;
        int face = 0;
        while (face < 5 && pick >= areas[face / 2]) pick -= areas[face++ / 2];
        const int axis = face / 2;
        Vec3 p(e.x() * (unit(rng) - 0.5), e.y() * (unit(rng) - 0.5), e.z() * (unit(rng) - 0.5));
        p[axis] = (face % 2 == 0 ? -0.5 : 0.5) * e[axis];
        pts.push_back(p);
      }
      break;
    }
    case SynthKind::Blob:
      for (std::size_t i = 0; i < spec.n_points; ++i) {
        pts.emplace_back(spec.blob_stdev * gauss(rng), spec.blob_stdev * gauss(rng), spec.blob_stdev * gauss(rng));
      }
      break;
    case SynthKind::Plantlike:
      detail::sample_plant(spec, rng, pts);
      break;
  }

  if (spec.noise > 0.0) {
    for (auto& p : pts) p += spec.noise * Vec3(gauss(rng), gauss(rng), gauss(rng));
  }
  return cloud;
}

/// Uniform random rotation (Haar measure) drawn from `rng`.
template <typename Rng>
Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace plant3d
