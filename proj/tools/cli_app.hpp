#pragma once

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plant3d/experiment.hpp"
#include "plant3d/io.hpp"
#include "plant3d/report.hpp"
#include "plant3d/serialize.hpp"
#include "plant3d/synth.hpp"

namespace plant3d::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kInternal = 3 };

/// Bad flag values or combinations; reported with exit code kUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = plant3d::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.detail());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return config_from_json(plant3d::detail::parse_json(path, plant3d::detail::read_file(path)));
}

struct CloudContext {
  PointCloud cloud;
  KdTree tree;
  CloudResolution res;
  NormalField normals;
};

inline CloudContext prepare_cloud(const std::string& path, std::size_t normals_k) {
  PointCloud cloud = load_cloud(path);
  KdTree tree(cloud);
  const CloudResolution res = cloud_resolution(cloud, tree);
  NormalField normals = estimate_normals(cloud, tree, std::min(normals_k, cloud.size()), default_viewpoint(cloud));
  return {std::move(cloud), std::move(tree), res, std::move(normals)};
}

inline void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    plant3d::detail::write_file(path, text);
  }
}

/// Runs the command line. Reports and data go to `out` when no output path
/// is given; progress, timings and errors go to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keypoint detection, local descriptors and encoded-feature classification for 3D point clouds"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic cloud (PLY, or XYZ for .xyz/.txt)");
  std::string synth_kind, synth_out;
  std::size_t synth_n = 3000;
  std::uint64_t synth_seed = 0;
  double synth_noise = 0.0;
  synth->add_option("--kind", synth_kind, "sphere | plane | box | blob | plantlike")->required();
  synth->add_option("--n", synth_n, "Number of points")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Sampling seed")->capture_default_str();
  synth->add_option("--noise", synth_noise, "Gaussian noise stdev")->capture_default_str();
  synth->add_option("--out", synth_out, "Output cloud path")->required();

  // keypoints
  auto* kp = app.add_subcommand("keypoints", "Detect keypoints and write them as JSON");
  std::string kp_input, kp_detector, kp_out, kp_config;
  kp->add_option("--input", kp_input, "Input cloud (PLY or XYZ)")->required();
  kp->add_option("--detector", kp_detector, "harris | iss | sift")->required();
  kp->add_option("--out", kp_out, "Output JSON path, - for stdout")->required();
  kp->add_option("--config", kp_config, "JSON config supplying detector parameters");

  // describe
  auto* desc = app.add_subcommand("describe", "Describe keypoints and write a P3DF descriptor file");
  std::string d_input, d_keypoints, d_descriptor, d_out, d_config, d_csv;
  double d_radius_mult = 0.0;
  desc->add_option("--input", d_input, "Input cloud (PLY or XYZ)")->required();
  desc->add_option("--keypoints", d_keypoints, "Keypoint JSON from the keypoints command")->required();
  desc->add_option("--descriptor", d_descriptor, "sift | shot")->required();
  auto* radius_opt = desc->add_option("--radius-mult", d_radius_mult, "Support radius in units of cloud resolution");
  desc->add_option("--out", d_out, "Output P3DF path")->required();
  desc->add_option("--csv", d_csv, "Also write descriptors as CSV");
  desc->add_option("--config", d_config, "JSON config supplying descriptor parameters");

  // run
  auto* run = app.add_subcommand("run", "Run the detector x descriptor x encoder experiment and emit accuracy tables");
  std::string r_manifest, r_task = "both", r_encoder = "both", r_report, r_format = "csv", r_config, r_pairs, r_species;
  bool r_synthetic = false, r_quiet = false;
  SyntheticSuiteSpec suite;
  std::size_t r_k = 0, r_repeats = 0;
  std::uint64_t r_seed = 0;
  double r_ratio = 0.0;
  auto* manifest_opt = run->add_option("--manifest", r_manifest, "Manifest CSV: path,species,condition,replicate,day");
  auto* synthetic_opt = run->add_flag("--synthetic", r_synthetic, "Use the built-in synthetic suite");
  manifest_opt->excludes(synthetic_opt);
  auto* classes_opt = run->add_option("--classes", suite.classes, "Synthetic classes (2 to 5)")->capture_default_str();
  auto* per_class_opt = run->add_option("--per-class", suite.per_class, "Synthetic clouds per class")->capture_default_str();
  auto* points_opt = run->add_option("--points", suite.n_points, "Synthetic points per cloud")->capture_default_str();
  classes_opt->needs(synthetic_opt);
  per_class_opt->needs(synthetic_opt);
  points_opt->needs(synthetic_opt);
  auto* task_opt = run->add_option("--task", r_task, "condition | stage | both")->capture_default_str();
  auto* enc_opt = run->add_option("--encoder", r_encoder, "fv | vlad | both")->capture_default_str();
  auto* k_opt = run->add_option("--k", r_k, "Codebook size (default 8)");
  auto* seed_opt = run->add_option("--seed", r_seed, "Split, codebook and synthetic-suite seed (default 42)");
  auto* ratio_opt = run->add_option("--train-ratio", r_ratio, "Train fraction (default 0.8)");
  auto* repeats_opt = run->add_option("--repeats", r_repeats, "Splits to average, reported as mean +/- sd");
  auto* pairs_opt = run->add_option("--pairs", r_pairs, "Comma-separated pairs, e.g. ISS-SHOT,SIFT-SIFT");
  auto* species_opt = run->add_option("--species", r_species, "Restrict a manifest run to one species");
  run->add_option("--report", r_report, "Report path, - or absent for stdout");
  run->add_option("--format", r_format, "csv | markdown")->capture_default_str();
  run->add_option("--config", r_config, "JSON config; flags override its values");
  run->add_flag("--quiet", r_quiet, "Suppress progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      SynthSpec spec;
      spec.kind = as_usage([&] { return synth_kind_from_string(synth_kind); });
      spec.n_points = synth_n;
      spec.seed = synth_seed;
      spec.noise = synth_noise;
      const PointCloud cloud = as_usage([&] { return synth_cloud(spec); });
      save_cloud(cloud, synth_out);
      err << "wrote " << cloud.size() << " points to " << synth_out << "\n";
      return kOk;
    }

    if (*kp) {
      const DetectorKind kind = as_usage([&] { return detector_kind_from_string(kp_detector); });
      const ExperimentConfig cfg = load_config(kp_config);
      const CloudContext c = prepare_cloud(kp_input, cfg.normals_k);
      const auto kps = detect_keypoints(kind, c.cloud, c.tree, c.normals, c.res, cfg);
      write_output(kp_out, plant3d::keypoints_to_json(kps).dump(2) + "\n", out);
      err << kps.size() << " " << to_string(kind) << " keypoints (resolution " << c.res.value() << ")\n";
      return kOk;
    }

    if (*desc) {
      const DescriptorKind kind = as_usage([&] { return descriptor_kind_from_string(d_descriptor); });
      ExperimentConfig cfg = load_config(d_config);
      if (radius_opt->count() > 0) {
        if (!(d_radius_mult > 0.0)) throw UsageError("--radius-mult must be positive");
        cfg.descriptors.sift.radius_mult = d_radius_mult;
        cfg.descriptors.shot.radius_mult = d_radius_mult;
      }
      const CloudContext c = prepare_cloud(d_input, cfg.normals_k);
      const auto kps = load_keypoints(d_keypoints);
      const DescriptorSet set = describe_keypoints(c.cloud, c.tree, c.normals, kps, kind, c.res, cfg.descriptors);
      save_p3df(set.rows, d_out);
      if (!d_csv.empty()) plant3d::detail::write_file(d_csv, descriptors_csv(set.rows));
      err << set.kept.size() << " descriptors of length " << set.rows.cols() << ", " << set.dropped
          << " keypoints dropped\n";
      return kOk;
    }

    // run
    if (r_manifest.empty() && !r_synthetic) throw UsageError("run needs --manifest <csv> or --synthetic");
    ExperimentConfig cfg = load_config(r_config);
    as_usage([&] {
      if (task_opt->count() > 0 || r_config.empty()) {
        cfg.tasks = r_task == "both" ? std::vector<Task>{Task::Condition, Task::Stage}
                                     : std::vector<Task>{task_from_string(r_task)};
      }
      if (enc_opt->count() > 0 || r_config.empty()) {
        cfg.encoders = r_encoder == "both" ? std::vector<EncoderKind>{EncoderKind::Fv, EncoderKind::Vlad}
                                           : std::vector<EncoderKind>{encoder_kind_from_string(r_encoder)};
      }
      if (pairs_opt->count() > 0) {
        cfg.pairs.clear();
        for (const auto& p : split_list(r_pairs)) cfg.pairs.push_back(pair_from_string(p));
      }
      if (k_opt->count() > 0) cfg.k = r_k;
      if (seed_opt->count() > 0) cfg.seed = r_seed;
      if (ratio_opt->count() > 0) cfg.train_ratio = r_ratio;
      if (repeats_opt->count() > 0) cfg.repeats = r_repeats;
      if (species_opt->count() > 0) cfg.species = r_species;
      cfg.validate();
      return 0;
    });
    const ReportFormat format = as_usage([&] { return report_format_from_string(r_format); });
    std::ostream* log = r_quiet ? nullptr : &err;

    std::vector<AccuracyTable> tables;
    if (r_synthetic) {
      if (!cfg.species.empty()) throw UsageError("--species applies to manifest runs only");
      suite.seed = cfg.seed;
      const Dataset data = as_usage([&] { return synthetic_dataset(suite); });
      tables.push_back(run_experiment(cfg, data, log));
    } else {
      const Dataset all = dataset_from_manifest(load_manifest(r_manifest), std::filesystem::path(r_manifest).stem().string());
      const auto species = cfg.species.empty() ? species_list(all) : std::vector<std::string>{cfg.species};
      for (const auto& s : species) tables.push_back(run_experiment(cfg, filter_species(all, s), log));
      if (tables.size() > 1) tables.push_back(average_tables(tables, all.name + ":average"));
    }
    write_output(r_report, emit_report(tables, format), out);
    if (!r_report.empty() && r_report != "-" && log) *log << "report written to " << r_report << "\n";
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace plant3d::cli
