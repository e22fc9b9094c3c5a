#pragma once

#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "plant3d/classify.hpp"
#include "plant3d/dataset.hpp"
#include "plant3d/descriptors.hpp"
#include "plant3d/detectors.hpp"
#include "plant3d/encoding.hpp"
#include "plant3d/io.hpp"
#include "plant3d/normals.hpp"
#include "plant3d/synth.hpp"

namespace plant3d {

enum class DetectorKind { Harris, Iss, Sift };
enum class EncoderKind { Fv, Vlad };
enum class Task { Condition, Stage };

inline std::string to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::Harris: return "harris";
    case DetectorKind::Iss: return "iss";
    case DetectorKind::Sift: return "sift";
  }
  return "?";
}
inline std::string to_string(EncoderKind e) { return e == EncoderKind::Fv ? "fv" : "vlad"; }
inline std::string to_string(Task t) { return t == Task::Condition ? "condition" : "stage"; }

inline DetectorKind detector_kind_from_string(const std::string& s) {
  if (s == "harris") return DetectorKind::Harris;
  if (s == "iss") return DetectorKind::Iss;
  if (s == "sift") return DetectorKind::Sift;
  fail(ErrorKind::InvalidArgument, "unknown detector '" + s + "'");
}
inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "fv") return EncoderKind::Fv;
  if (s == "vlad") return EncoderKind::Vlad;
  fail(ErrorKind::InvalidArgument, "unknown encoder '" + s + "'");
}
inline Task task_from_string(const std::string& s) {
  if (s == "condition") return Task::Condition;
  if (s == "stage") return Task::Stage;
  fail(ErrorKind::InvalidArgument, "unknown task '" + s + "'");
}

struct PairSpec {
  DetectorKind detector;
  DescriptorKind descriptor;
  bool operator==(const PairSpec&) const = default;
};

/// Report row order.
inline constexpr std::array<PairSpec, 6> kPairOrder = {{
    {DetectorKind::Harris, DescriptorKind::Shot},
    {DetectorKind::Iss, DescriptorKind::Shot},
    {DetectorKind::Sift, DescriptorKind::Shot},
    {DetectorKind::Harris, DescriptorKind::Sift},
    {DetectorKind::Iss, DescriptorKind::Sift},
    {DetectorKind::Sift, DescriptorKind::Sift},
}};

inline std::string pair_label(const PairSpec& p) {
  static const std::map<DetectorKind, std::string> det = {
      {DetectorKind::Harris, "Harris"}, {DetectorKind::Iss, "ISS"}, {DetectorKind::Sift, "SIFT"}};
  return det.at(p.detector) + "-" + (p.descriptor == DescriptorKind::Sift ? "SIFT" : "SHOT");
}

inline PairSpec pair_from_string(const std::string& s) {
  for (const auto& p : kPairOrder) {
    std::string label = pair_label(p);
    std::string lower;
    for (const char c : label) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == label || s == lower) return p;
  }
  fail(ErrorKind::InvalidArgument, "unknown detector-descriptor pair '" + s + "'");
}

/// Column order of a report row.
struct CellKey {
  EncoderKind encoder;
  Task task;
};
inline constexpr std::array<CellKey, 4> kColumnOrder = {{
    {EncoderKind::Fv, Task::Condition},
    {EncoderKind::Fv, Task::Stage},
    {EncoderKind::Vlad, Task::Condition},
    {EncoderKind::Vlad, Task::Stage},
}};

inline std::string column_name(const CellKey& c) { return to_string(c.encoder) + "_" + to_string(c.task); }

struct ExperimentConfig {
  std::vector<PairSpec> pairs{kPairOrder.begin(), kPairOrder.end()};
  std::vector<EncoderKind> encoders{EncoderKind::Fv, EncoderKind::Vlad};
  std::vector<Task> tasks{Task::Condition, Task::Stage};
  std::string species;  // empty: all species
  std::size_t k = 8;
  double train_ratio = 0.8;
  std::uint64_t seed = 42;
  std::size_t repeats = 1;
  std::size_t normals_k = 10;
  std::size_t min_keypoints = 3;
  HarrisParams harris;
  IssParams iss;
  SiftDetectorParams sift_detector;
  DescriptorParams descriptors;
  KMeansParams kmeans;
  GmmParams gmm;
  TrainConfig svm;

  void validate() const {
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) fail(ErrorKind::InvalidArgument, "train_ratio must lie in (0, 1)");
    if (k == 0) fail(ErrorKind::InvalidK, "codebook size k must be >= 1");
    if (repeats == 0) fail(ErrorKind::InvalidArgument, "repeats must be >= 1");
    if (pairs.empty() || encoders.empty() || tasks.empty()) {
      fail(ErrorKind::InvalidArgument, "at least one pair, encoder and task is required");
    }
  }
};

/// Parameters as JSON; also the config-file schema. Keys absent from a
/// config file keep their defaults.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : c.pairs) pairs.push_back(pair_label(p));
  nlohmann::json enc = nlohmann::json::array();
  for (const auto e : c.encoders) enc.push_back(to_string(e));
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto t : c.tasks) tasks.push_back(to_string(t));
  return {
      {"pairs", pairs},
      {"encoders", enc},
      {"tasks", tasks},
      {"species", c.species},
      {"k", c.k},
      {"train_ratio", c.train_ratio},
      {"seed", c.seed},
      {"repeats", c.repeats},
      {"normals_k", c.normals_k},
      {"min_keypoints", c.min_keypoints},
      {"harris",
       {{"radius_mult", c.harris.radius_mult},
        {"k", c.harris.k},
        {"threshold_rel", c.harris.threshold_rel},
        {"nms_radius_mult", c.harris.nms_radius_mult}}},
      {"iss",
       {{"salient_radius_mult", c.iss.salient_radius_mult},
        {"nms_radius_mult", c.iss.nms_radius_mult},
        {"gamma_21", c.iss.gamma_21},
        {"gamma_32", c.iss.gamma_32},
        {"min_neighbors", c.iss.min_neighbors}}},
      {"sift_detector",
       {{"min_scale_mult", c.sift_detector.min_scale_mult},
        {"n_octaves", c.sift_detector.n_octaves},
        {"scales_per_octave", c.sift_detector.scales_per_octave},
        {"min_contrast", c.sift_detector.min_contrast},
        {"curvature_reject_ratio", c.sift_detector.curvature_reject_ratio}}},
      {"sift_descriptor",
       {{"radius_mult", c.descriptors.sift.radius_mult},
        {"min_neighbors", c.descriptors.sift.min_neighbors},
        {"refine_orientation", c.descriptors.sift.refine_orientation},
        {"soft_binning", c.descriptors.sift.soft_binning}}},
      {"shot", {{"radius_mult", c.descriptors.shot.radius_mult}, {"min_neighbors", c.descriptors.shot.min_neighbors}}},
      {"kmeans", {{"max_iterations", c.kmeans.max_iterations}, {"tolerance", c.kmeans.tolerance}}},
      {"gmm",
       {{"max_iterations", c.gmm.max_iterations},
        {"tolerance", c.gmm.tolerance},
        {"variance_floor_rel", c.gmm.variance_floor_rel}}},
      {"svm",
       {{"standardization", c.svm.standardization == Standardization::Pooled ? "pooled" : "per_dimension"},
        {"c_reg", c.svm.c_reg}, {"epochs", c.svm.epochs}, {"tolerance", c.svm.tolerance}, {"seed", c.svm.seed}}},
  };
}

inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  auto get = [](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    if (!j.is_object()) fail(ErrorKind::ParseError, "config must be a JSON object");
    if (j.contains("pairs")) {
      c.pairs.clear();
      for (const auto& p : j.at("pairs")) c.pairs.push_back(pair_from_string(p.get<std::string>()));
    }
    if (j.contains("encoders")) {
      c.encoders.clear();
      for (const auto& e : j.at("encoders")) c.encoders.push_back(encoder_kind_from_string(e.get<std::string>()));
    }
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from_string(t.get<std::string>()));
    }
    get(j, "species", c.species);
    get(j, "k", c.k);
    get(j, "train_ratio", c.train_ratio);
    get(j, "seed", c.seed);
    get(j, "repeats", c.repeats);
    get(j, "normals_k", c.normals_k);
    get(j, "min_keypoints", c.min_keypoints);
    if (j.contains("harris")) {
      const auto& h = j.at("harris");
      get(h, "radius_mult", c.harris.radius_mult);
      get(h, "k", c.harris.k);
      get(h, "threshold_rel", c.harris.threshold_rel);
      get(h, "nms_radius_mult", c.harris.nms_radius_mult);
    }
    if (j.contains("iss")) {
      const auto& s = j.at("iss");
      get(s, "salient_radius_mult", c.iss.salient_radius_mult);
      get(s, "nms_radius_mult", c.iss.nms_radius_mult);
      get(s, "gamma_21", c.iss.gamma_21);
      get(s, "gamma_32", c.iss.gamma_32);
      get(s, "min_neighbors", c.iss.min_neighbors);
    }
    if (j.contains("sift_detector")) {
      const auto& s = j.at("sift_detector");
      get(s, "min_scale_mult", c.sift_detector.min_scale_mult);
      get(s, "n_octaves", c.sift_detector.n_octaves);
      get(s, "scales_per_octave", c.sift_detector.scales_per_octave);
      get(s, "min_contrast", c.sift_detector.min_contrast);
      get(s, "curvature_reject_ratio", c.sift_detector.curvature_reject_ratio);
    }
    if (j.contains("sift_descriptor")) {
      const auto& s = j.at("sift_descriptor");
      get(s, "radius_mult", c.descriptors.sift.radius_mult);
      get(s, "min_neighbors", c.descriptors.sift.min_neighbors);
      get(s, "refine_orientation", c.descriptors.sift.refine_orientation);
      get(s, "soft_binning", c.descriptors.sift.soft_binning);
    }
    if (j.contains("shot")) {
      const auto& s = j.at("shot");
      get(s, "radius_mult", c.descriptors.shot.radius_mult);
      get(s, "min_neighbors", c.descriptors.shot.min_neighbors);
    }
    if (j.contains("kmeans")) {
      get(j.at("kmeans"), "max_iterations", c.kmeans.max_iterations);
      get(j.at("kmeans"), "tolerance", c.kmeans.tolerance);
    }
    if (j.contains("gmm")) {
      get(j.at("gmm"), "max_iterations", c.gmm.max_iterations);
      get(j.at("gmm"), "tolerance", c.gmm.tolerance);
      get(j.at("gmm"), "variance_floor_rel", c.gmm.variance_floor_rel);
    }
    if (j.contains("svm")) {
      const auto& s = j.at("svm");
      if (s.contains("standardization")) {
        const auto mode = s.at("standardization").get<std::string>();
        if (mode == "pooled") {
          c.svm.standardization = Standardization::Pooled;
        } else if (mode == "per_dimension") {
          c.svm.standardization = Standardization::PerDimension;
        } else {
          fail(ErrorKind::ParseError, "config: svm.standardization must be 'pooled' or 'per_dimension'");
        }
      }
      get(s, "c_reg", c.svm.c_reg);
      get(s, "epochs", c.svm.epochs);
      get(s, "tolerance", c.svm.tolerance);
      get(s, "seed", c.svm.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Datasets

/// Labeled clouds, loaded lazily by index.
struct Dataset {
  std::string name;
  std::vector<std::string> ids;
  std::vector<std::string> species;
  std::vector<std::string> condition;
  std::vector<std::string> stage;
  std::function<PointCloud(std::size_t)> load;

  std::size_t size() const { return ids.size(); }
  const std::vector<std::string>& labels(Task t) const { return t == Task::Condition ? condition : stage; }
};

inline Dataset dataset_from_manifest(const std::vector<ManifestRecord>& records, const std::string& name = "manifest") {
  Dataset d;
  d.name = name;
  const auto stages = assign_stages(records);
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < records.size(); ++i) {
    d.ids.push_back(records[i].path);
    d.species.push_back(records[i].species);
    d.condition.push_back(to_string(records[i].condition));
    d.stage.push_back(to_string(stages[i]));
    paths.push_back(records[i].path);
  }
  d.load = [paths](std::size_t i) { return load_cloud(paths.at(i)); };
  return d;
}

/// Records restricted to one species; the result keeps the input order.
inline Dataset filter_species(const Dataset& d, const std::string& species) {
  Dataset out;
  out.name = d.name + ":" + species;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.species[i] != species) continue;
    keep.push_back(i);
    out.ids.push_back(d.ids[i]);
    out.species.push_back(d.species[i]);
    out.condition.push_back(d.condition[i]);
    out.stage.push_back(d.stage[i]);
  }
  if (keep.empty()) fail(ErrorKind::EmptySet, "no records for species '" + species + "'");
  out.load = [load = d.load, keep](std::size_t i) { return load(keep.at(i)); };
  return out;
}

inline std::vector<std::string> species_list(const Dataset& d) {
  const std::set<std::string> s(d.species.begin(), d.species.end());
  return {s.begin(), s.end()};
}

struct SyntheticSuiteSpec {
  std::size_t classes = 3;
  std::size_t per_class = 45;
  std::size_t n_points = 3000;
  int days = 21;
  std::uint64_t seed = 7;
};

/// Class order of the synthetic suite; the first three are the default
/// 3-class benchmark.
inline constexpr std::array<SynthKind, 5> kSyntheticClasses = {SynthKind::Sphere, SynthKind::Box, SynthKind::Plantlike,
                                                               SynthKind::Blob, SynthKind::Plane};

/// Recipe for item `index` of class `cls`. Each item has a random overall
/// size, yaw, point count (within 10%) and noise, plus a growth day that
/// changes the shape's proportions.
inline std::pair<SynthSpec, Mat3> synthetic_item(const SyntheticSuiteSpec& suite, std::size_t cls, std::size_t index,
                                                 int day) {
  std::seed_seq seq{static_cast<std::uint32_t>(suite.seed), static_cast<std::uint32_t>(suite.seed >> 32),
                    static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double growth = suite.days > 1 ? static_cast<double>(day) / (suite.days - 1) : 0.0;
  const double size = 0.7 + 0.6 * unit(rng);

  SynthSpec spec;
  spec.kind = kSyntheticClasses.at(cls);
  spec.n_points = static_cast<std::size_t>(static_cast<double>(suite.n_points) * (0.9 + 0.2 * unit(rng)));
  spec.noise = size * (0.003 + 0.004 * unit(rng));
  spec.seed = rng();
  Vec3 stretch = Vec3::Ones();
  switch (spec.kind) {
    case SynthKind::Sphere:
      spec.radius = 1.0;
      stretch = Vec3(1.0, 1.0, 1.0 + 0.6 * growth);
      break;
    case SynthKind::Box:
      spec.extents = Vec3(1.0, 1.0, 0.5 + 1.0 * growth);
      break;
    case SynthKind::Plantlike:
      spec.plant.n_leaves = 3 + static_cast<int>(std::lround(3.0 * growth));
      spec.plant.leaf_length = 0.3 + 0.3 * growth;
      spec.plant.leaf_width = 0.12 + 0.1 * growth;
      spec.plant.stem_height = 0.6 + 0.6 * growth;
      spec.plant.first_azimuth_deg = 360.0 * unit(rng);
      break;
    case SynthKind::Blob:
      spec.blob_stdev = 0.5;
      stretch = Vec3(1.0, 1.0, 1.0 + 0.6 * growth);
      break;
    case SynthKind::Plane:
      stretch = Vec3(1.0, 0.5 + 0.5 * growth, 1.0);
      break;
  }
  const double yaw = 2.0 * std::numbers::pi * unit(rng);
  const Mat3 transform = size * Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix() * stretch.asDiagonal();
  return {spec, transform};
}

/// Balanced synthetic suite: class label = shape name, growth days spread
/// evenly over [0, days) within each class, stage by day tertile.
inline Dataset synthetic_dataset(const SyntheticSuiteSpec& suite) {
  if (suite.classes < 2 || suite.classes > kSyntheticClasses.size()) {
    fail(ErrorKind::InvalidArgument, "synthetic suite supports 2 to " + std::to_string(kSyntheticClasses.size()) + " classes");
  }
  if (suite.per_class < 2) fail(ErrorKind::InvalidArgument, "synthetic suite needs at least 2 clouds per class");
  if (suite.days < 3) fail(ErrorKind::InvalidArgument, "synthetic suite needs at least 3 days");
  Dataset d;
  d.name = "synthetic";
  std::vector<ManifestRecord> records;
  std::vector<std::pair<SynthSpec, Mat3>> recipes;
  for (std::size_t c = 0; c < suite.classes; ++c) {
    for (std::size_t i = 0; i < suite.per_class; ++i) {
      const int day = static_cast<int>(i * static_cast<std::size_t>(suite.days) / suite.per_class);
      recipes.push_back(synthetic_item(suite, c, i, day));
      ManifestRecord r;
      r.species = "synthetic";
      r.day = day;
      records.push_back(r);
      d.ids.push_back("synth:" + to_string(kSyntheticClasses[c]) + ":" + std::to_string(i));
      d.species.push_back("synthetic");
      d.condition.push_back(to_string(kSyntheticClasses[c]));
    }
  }
  for (const auto s : assign_stages(records)) d.stage.push_back(to_string(s));
  d.load = [recipes](std::size_t i) {
    const auto& [spec, transform] = recipes.at(i);
    PointCloud cloud = synth_cloud(spec);
    for (auto& p : cloud.points) p = transform * p;
    return cloud;
  };
  return d;
}

// ---------------------------------------------------------------------------
// Results

struct Cell {
  enum class State { NotRun, Skipped, Done };
  State state = State::NotRun;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;  // number of repeats behind mean / sd

  bool operator==(const Cell&) const = default;
};

struct AccuracyTable {
  std::string name;
  std::array<std::array<Cell, 4>, 6> cells{};
  std::vector<std::pair<std::string, std::string>> metadata;

  Cell& at(std::size_t row, const CellKey& key) {
    for (std::size_t c = 0; c < kColumnOrder.size(); ++c) {
      if (kColumnOrder[c].encoder == key.encoder && kColumnOrder[c].task == key.task) return cells[row][c];
    }
    fail(ErrorKind::InvalidArgument, "unknown column");
  }
};

inline std::size_t pair_row(const PairSpec& p) {
  for (std::size_t r = 0; r < kPairOrder.size(); ++r) {
    if (kPairOrder[r] == p) return r;
  }
  fail(ErrorKind::InvalidArgument, "unknown pair");
}

inline Cell summarize(const std::vector<double>& values) {
  Cell c;
  c.state = Cell::State::Done;
  c.n = values.size();
  double sum = 0.0;
  for (const double v : values) sum += v;
  c.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - c.mean) * (v - c.mean);
  c.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return c;
}

// ---------------------------------------------------------------------------
// Runner

namespace detail {

struct CloudFeatures {
  PointCloud cloud;
  std::optional<KdTree> tree;
  std::optional<CloudResolution> res;
  NormalField normals;
  std::map<DetectorKind, std::vector<Keypoint>> keypoints;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Samples stack_rows(const std::vector<Samples>& sets, const std::vector<std::size_t>& which) {
  Eigen::Index rows = 0;
  for (const auto i : which) rows += sets[i].rows();
  Samples out(rows, sets[which.front()].cols());
  Eigen::Index r = 0;
  for (const auto i : which) {
    out.middleRows(r, sets[i].rows()) = sets[i];
    r += sets[i].rows();
  }
  return out;
}

}  // namespace detail

/// Dispatches to the detector named by `kind` with the parameters in `cfg`.
inline std::vector<Keypoint> detect_keypoints(DetectorKind kind, const PointCloud& cloud, const KdTree& tree,
                                              const NormalField& normals, const CloudResolution& res,
                                              const ExperimentConfig& cfg) {
  switch (kind) {
    case DetectorKind::Harris: return detect_harris3d(cloud, tree, normals, cfg.harris, res);
    case DetectorKind::Iss: return detect_iss(cloud, tree, cfg.iss, res);
    case DetectorKind::Sift: return detect_sift3d(cloud, tree, cfg.sift_detector, res);
  }
  return {};
}

/// Runs every requested cell over `data`. Keypoints are cached per cloud and
/// detector; codebooks and classifiers are fit per cell on training clouds
/// only. A pair is skipped when any cloud yields fewer than min_keypoints
/// descriptors. `log` receives progress and timings and may be null.
inline AccuracyTable run_experiment(const ExperimentConfig& cfg, const Dataset& data, std::ostream* log = nullptr) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  AccuracyTable table;
  table.name = data.name;
  if (data.size() == 0) fail(ErrorKind::EmptySet, "dataset has no clouds");

  std::vector<SplitIndices> splits;  // [task][repeat] flattened as task * repeats + r
  for (const Task t : cfg.tasks) {
    for (std::size_t r = 0; r < cfg.repeats; ++r) splits.push_back(stratified_split(data.labels(t), cfg.train_ratio, cfg.seed + r));
  }
  auto split_for = [&](std::size_t task_idx, std::size_t r) -> const SplitIndices& {
    return splits[task_idx * cfg.repeats + r];
  };

  std::vector<detail::CloudFeatures> feats(data.size());
  auto prepare = [&](std::size_t i) -> detail::CloudFeatures& {
    auto& f = feats[i];
    if (f.tree) return f;
    f.cloud = data.load(i);
    f.tree.emplace(f.cloud);
    f.res = cloud_resolution(f.cloud, *f.tree);
    f.normals = estimate_normals(f.cloud, *f.tree, std::min(cfg.normals_k, f.cloud.size()), default_viewpoint(f.cloud));
    return f;
  };

  const auto t_start = clock::now();

  for (const PairSpec& pair : kPairOrder) {
    if (std::find(cfg.pairs.begin(), cfg.pairs.end(), pair) == cfg.pairs.end()) continue;
    const std::string label = pair_label(pair);
    const std::size_t row = pair_row(pair);
    const auto t_pair = clock::now();

    std::vector<Samples> desc(data.size());
    std::size_t total_kp = 0, min_desc = std::numeric_limits<std::size_t>::max();
    std::string starved;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::size_t n = 0;
      try {
        auto& f = prepare(i);
        auto it = f.keypoints.find(pair.detector);
        if (it == f.keypoints.end()) {
          it = f.keypoints.emplace(pair.detector, detect_keypoints(pair.detector, f.cloud, *f.tree, f.normals, *f.res, cfg))
                   .first;
        }
        total_kp += it->second.size();
        desc[i] = describe_keypoints(f.cloud, *f.tree, f.normals, it->second, pair.descriptor, *f.res, cfg.descriptors).rows;
        n = static_cast<std::size_t>(desc[i].rows());
      } catch (const Error& e) {
        throw with_context(e, "cell " + label + ", cloud " + data.ids[i]);
      }
      if (n < min_desc) min_desc = n;
      if (n < cfg.min_keypoints && starved.empty()) starved = data.ids[i];
    }
    if (log) {
      *log << "[" << label << "] keypoints total " << total_kp << ", mean/cloud "
           << static_cast<double>(total_kp) / static_cast<double>(data.size()) << ", min descriptors/cloud " << min_desc
           << ", features " << detail::seconds_since(t_pair) << " s\n";
    }
    if (!starved.empty()) {
      for (const auto& key : kColumnOrder) {
        const bool requested = std::find(cfg.encoders.begin(), cfg.encoders.end(), key.encoder) != cfg.encoders.end() &&
                               std::find(cfg.tasks.begin(), cfg.tasks.end(), key.task) != cfg.tasks.end();
        if (requested) table.at(row, key).state = Cell::State::Skipped;
      }
      table.metadata.emplace_back("skipped " + label, "cloud " + starved + " has fewer than " +
                                                          std::to_string(cfg.min_keypoints) + " descriptors");
      if (log) *log << "[" << label << "] skipped: " << starved << " has < " << cfg.min_keypoints << " descriptors\n";
      continue;
    }

    for (const EncoderKind enc : cfg.encoders) {
      for (std::size_t ti = 0; ti < cfg.tasks.size(); ++ti) {
        const Task task = cfg.tasks[ti];
        const std::string cell = label + "/" + to_string(enc) + "/" + to_string(task);
        const auto t_cell = clock::now();
        std::vector<double> accs;
        try {
          for (std::size_t r = 0; r < cfg.repeats; ++r) {
            const SplitIndices& sp = split_for(ti, r);
            const Samples train_desc = detail::stack_rows(desc, sp.train);
            const auto dim = static_cast<Eigen::Index>(2 * cfg.k * descriptor_size(pair.descriptor));
            Samples encoded(static_cast<Eigen::Index>(data.size()),
                                    enc == EncoderKind::Fv ? dim : dim / 2);
            if (enc == EncoderKind::Fv) {
              const GmmCodebook g = fit_gmm(train_desc, cfg.k, cfg.seed, cfg.gmm);
              for (std::size_t i = 0; i < data.size(); ++i) encoded.row(static_cast<Eigen::Index>(i)) = encode_fv(g, desc[i]).transpose();
            } else {
              const KMeansCodebook cb = fit_kmeans(train_desc, cfg.k, cfg.seed, cfg.kmeans);
              for (std::size_t i = 0; i < data.size(); ++i) encoded.row(static_cast<Eigen::Index>(i)) = encode_vlad(cb, desc[i]).transpose();
            }
            const auto& labels = data.labels(task);
            FeatureMatrix x_train(static_cast<Eigen::Index>(sp.train.size()), encoded.cols());
            std::vector<std::string> y_train;
            for (std::size_t j = 0; j < sp.train.size(); ++j) {
              x_train.row(static_cast<Eigen::Index>(j)) = encoded.row(static_cast<Eigen::Index>(sp.train[j]));
              y_train.push_back(labels[sp.train[j]]);
            }
            const LinearSvmModel model = train_svm_ova(x_train, y_train, cfg.svm);
            std::vector<std::string> pred, truth;
            for (const auto i : sp.test) {
              pred.push_back(predict(model, encoded.row(static_cast<Eigen::Index>(i)).transpose()));
              truth.push_back(labels[i]);
            }
            accs.push_back(accuracy(pred, truth));
          }
        } catch (const Error& e) {
          throw with_context(e, "cell " + cell);
        }
        Cell& out = table.at(row, {enc, task});
        out = summarize(accs);
        if (log) {
          *log << "[" << cell << "] accuracy " << out.mean;
          if (cfg.repeats > 1) *log << " +/- " << out.sd;
          *log << " (" << detail::seconds_since(t_cell) << " s)\n";
        }
      }
    }
  }
  if (log) *log << "[" << data.name << "] total " << detail::seconds_since(t_start) << " s\n";

  const auto& first_split = splits.front();
  table.metadata.insert(table.metadata.begin(),
                        {{"dataset", data.name},
                         {"clouds", std::to_string(data.size())},
                         {"train", std::to_string(first_split.train.size())},
                         {"test", std::to_string(first_split.test.size())},
                         {"seed", std::to_string(cfg.seed)},
                         {"repeats", std::to_string(cfg.repeats)},
                         {"stages", "per-species tertiles of distinct days"},
                         {"params", config_to_json(cfg).dump()}});
  return table;
}

/// Cell-wise mean over tables; a cell is Done only if done in every table.
inline AccuracyTable average_tables(const std::vector<AccuracyTable>& tables, const std::string& name = "average") {
  if (tables.empty()) fail(ErrorKind::EmptySet, "no tables to average");
  AccuracyTable out;
  out.name = name;
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      std::vector<double> v;
      Cell::State state = Cell::State::Done;
      for (const auto& t : tables) {
        const Cell& cell = t.cells[r][c];
        if (cell.state != Cell::State::Done) {
          state = cell.state == Cell::State::Skipped || state == Cell::State::Skipped ? Cell::State::Skipped
                                                                                       : Cell::State::NotRun;
        } else {
          v.push_back(cell.mean);
        }
      }
      if (state == Cell::State::Done) {
        out.cells[r][c] = summarize(v);
        out.cells[r][c].sd = 0.0;
        out.cells[r][c].n = 1;
      } else {
        out.cells[r][c].state = state;
      }
    }
  }
  std::string names;
  for (const auto& t : tables) names += (names.empty() ? "" : ",") + t.name;
  out.metadata.emplace_back("averaged_over", names);
  return out;
}

}  // namespace plant3d
