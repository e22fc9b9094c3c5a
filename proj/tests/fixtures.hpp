#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "plant3d/cloud.hpp"
#include "plant3d/synth.hpp"

namespace fixtures {

using plant3d::Point3;
using plant3d::PointCloud;
using plant3d::Vec3;

/// Square grid of (n+1)^2 points in the z = 0 plane with spacing h, centered.
inline PointCloud grid_plane(int n, double h) {
  PointCloud c;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) c.points.emplace_back((i - n / 2.0) * h, (j - n / 2.0) * h, 0.0);
  }
  return c;
}

/// Surface of the axis-aligned cube [0, 1]^3 sampled on a grid of spacing
/// 1/n; every grid point on the boundary appears once.
inline PointCloud grid_cube(int n) {
  PointCloud c;
  const double h = 1.0 / n;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k <= n; ++k) {
        if (i == 0 || j == 0 || k == 0 || i == n || j == n || k == n) c.points.emplace_back(i * h, j * h, k * h);
      }
    }
  }
  return c;
}

inline PointCloud cube_corners() {
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.points.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  return c;
}

inline PointCloud plantlike(std::size_t n, double noise, std::uint64_t seed) {
  plant3d::SynthSpec s;
  s.kind = plant3d::SynthKind::Plantlike;
  s.n_points = n;
  s.noise = noise;
  s.seed = seed;
  return plant3d::synth_cloud(s);
}

/// Scratch directory unique to the calling test, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("plant3d_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name, std::ios::binary) << text;
  }
};

}  // namespace fixtures
