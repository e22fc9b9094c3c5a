// Detects ISS keypoints on two synthetic shapes, describes them with SHOT,
// encodes each cloud as a VLAD vector and prints the cosine similarity of
// each cloud to a rotated copy of itself and to the other shape.
#include <cstdio>

#include "plant3d/descriptors.hpp"
#include "plant3d/detectors.hpp"
#include "plant3d/encoding.hpp"
#include "plant3d/normals.hpp"
#include "plant3d/synth.hpp"

using namespace plant3d;

// Normal signs follow the viewpoint, so a rotated copy must be given the
// rotated viewpoint for its descriptors to match.
static Samples shot_descriptors(const PointCloud& cloud, const Point3& viewpoint) {
  const KdTree tree(cloud);
  const CloudResolution res = cloud_resolution(cloud, tree);
  const NormalField normals = estimate_normals(cloud, tree, 10, viewpoint);
  const auto kps = detect_iss(cloud, tree, IssParams{}, res);
  const DescriptorSet set = describe_keypoints(cloud, tree, normals, kps, DescriptorKind::Shot, res, DescriptorParams{});
  std::printf("  %zu keypoints, %zu described\n", kps.size(), set.kept.size());
  return set.rows;
}

int main() {
  SynthSpec plant{.kind = SynthKind::Plantlike, .n_points = 3000, .noise = 0.004, .seed = 1};
  SynthSpec box{.kind = SynthKind::Box, .n_points = 3000, .noise = 0.004, .seed = 2};
  const PointCloud a = synth_cloud(plant);
  const PointCloud b = synth_cloud(box);
  std::mt19937_64 rng(3);
  const Mat3 rotation = random_rotation(rng);
  const PointCloud a_rot = transformed(a, rotation);
  const Point3 view = default_viewpoint(a);

  std::puts("plantlike:");
  const Samples da = shot_descriptors(a, view);
  std::puts("plantlike, rotated:");
  const Samples dr = shot_descriptors(a_rot, rotation * view);
  std::puts("box:");
  const Samples db = shot_descriptors(b, default_viewpoint(b));

  Samples pooled(da.rows() + db.rows(), da.cols());
  pooled << da, db;
  const KMeansCodebook cb = fit_kmeans(pooled, 8, 42);
  const Eigen::VectorXd va = encode_vlad(cb, da);
  const Eigen::VectorXd vr = encode_vlad(cb, dr);
  const Eigen::VectorXd vb = encode_vlad(cb, db);
  std::printf("VLAD length %ld\n", static_cast<long>(va.size()));
  std::printf("cos(plantlike, rotated plantlike) = %.3f\n", va.dot(vr));
  std::printf("cos(plantlike, box)               = %.3f\n", va.dot(vb));
  return 0;
}
