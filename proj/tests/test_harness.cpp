#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "plant3d/experiment.hpp"
#include "plant3d/report.hpp"
#include "plant3d/synth.hpp"

using namespace plant3d;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no plant3d::Error thrown";
  return Error(ErrorKind::InvalidArgument, "none");
}

const char* kManifest =
    "path,species,condition,replicate,day\n"
    "a.ply,tomato,control,1,3\n"
    "# comment line\n"
    "\n"
    "b.ply,tomato,heat,2,1\n"
    "\"c,1.ply\",tomato,shade,1,2\n";

std::vector<ManifestRecord> days_manifest(int first, int last, const std::string& species = "s") {
  std::vector<ManifestRecord> r;
  for (int d = first; d <= last; ++d) r.push_back({"p" + std::to_string(d), species, Condition::Control, 1, d});
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

TEST(Manifest, ParsesRecordsCommentsAndQuotes) {
  const auto r = parse_manifest(kManifest, "m.csv", "/data");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].path, "/data/a.ply");
  EXPECT_EQ(r[1].condition, Condition::Heat);
  EXPECT_EQ(r[1].replicate, 2);
  EXPECT_EQ(r[2].path, "/data/c,1.ply");
  EXPECT_EQ(r[2].day, 2);
}

TEST(Manifest, ColumnsMatchedByName) {
  const auto r = parse_manifest("day,condition,path,replicate,species,extra\n5,shade,/abs/x.ply,3,rice,zzz\n");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].path, "/abs/x.ply");
  EXPECT_EQ(r[0].species, "rice");
  EXPECT_EQ(r[0].day, 5);
}

TEST(Manifest, ErrorsNameLineAndColumn) {
  const Error unknown = error_of([] { parse_manifest("path,species,condition,replicate,day\nx,s,drought,1,1\n", "m.csv"); });
  EXPECT_EQ(unknown.kind(), ErrorKind::UnknownCondition);
  EXPECT_NE(std::string(unknown.what()).find("m.csv:2"), std::string::npos);
  EXPECT_NE(std::string(unknown.what()).find("condition"), std::string::npos);

  const Error day = error_of([] { parse_manifest("path,species,condition,replicate,day\nx,s,heat,1,abc\n", "m.csv"); });
  EXPECT_EQ(day.kind(), ErrorKind::ParseError);
  EXPECT_NE(std::string(day.what()).find("'day'"), std::string::npos);

  EXPECT_EQ(error_of([] { parse_manifest("path,species,condition,day\n"); }).kind(), ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { parse_manifest("path,species,condition,replicate,day\nx,s,heat,0,1\n"); }).kind(),
            ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { parse_manifest("path,species,condition,replicate,day\nx,s,heat\n"); }).kind(),
            ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { parse_manifest(""); }).kind(), ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { load_manifest("/nonexistent/manifest.csv"); }).kind(), ErrorKind::NotFound);
}

// ---------------------------------------------------------------------------
// Stages

TEST(Stages, TwentyOneDaysSplitSevenSevenSeven) {
  const auto s = assign_stages(days_manifest(1, 21));
  for (int d = 1; d <= 21; ++d) {
    const Stage expected = d <= 7 ? Stage::Stage1 : d <= 14 ? Stage::Stage2 : Stage::Stage3;
    EXPECT_EQ(s[static_cast<std::size_t>(d - 1)], expected) << "day " << d;
  }
}

TEST(Stages, RemainderGoesToEarlierGroups) {
  const auto s = assign_stages(days_manifest(0, 4));  // 5 days: 2, 2, 1
  EXPECT_EQ(s, (std::vector<Stage>{Stage::Stage1, Stage::Stage1, Stage::Stage2, Stage::Stage2, Stage::Stage3}));
}

TEST(Stages, PerSpeciesAndRepeatedDays) {
  auto r = days_manifest(1, 3, "a");
  const auto b = days_manifest(10, 12, "b");
  r.insert(r.end(), b.begin(), b.end());
  r.push_back({"again", "a", Condition::Heat, 2, 3});
  const auto s = assign_stages(r);
  EXPECT_EQ(s[3], Stage::Stage1);
  EXPECT_EQ(s[5], Stage::Stage3);
  EXPECT_EQ(s[6], Stage::Stage3);
}

TEST(Stages, TooFewDays) {
  EXPECT_EQ(error_of([] { assign_stages(days_manifest(1, 2)); }).kind(), ErrorKind::TooFewDays);
}

// ---------------------------------------------------------------------------
// Split

TEST(Split, StratifiedEightyTwenty) {
  std::vector<std::string> labels;
  for (const char* c : {"a", "b", "c"})
    for (int i = 0; i < 45; ++i) labels.emplace_back(c);
  const auto sp = stratified_split(labels, 0.8, 42);
  EXPECT_EQ(sp.train.size(), 108u);
  EXPECT_EQ(sp.test.size(), 27u);
  std::map<std::string, int> per_class;
  for (const auto i : sp.test) ++per_class[labels[i]];
  for (const auto& [c, n] : per_class) EXPECT_EQ(n, 9) << c;
  std::set<std::size_t> all(sp.train.begin(), sp.train.end());
  all.insert(sp.test.begin(), sp.test.end());
  EXPECT_EQ(all.size(), 135u);
  EXPECT_TRUE(std::is_sorted(sp.train.begin(), sp.train.end()));
}

TEST(Split, DeterministicAndSeedSensitive) {
  std::vector<std::string> labels(40, "a");
  labels.resize(80, "b");
  EXPECT_EQ(stratified_split(labels, 0.8, 1).test, stratified_split(labels, 0.8, 1).test);
  EXPECT_NE(stratified_split(labels, 0.8, 1).test, stratified_split(labels, 0.8, 2).test);
}

TEST(Split, Errors) {
  EXPECT_EQ(error_of([] { stratified_split({"a", "a", "b"}, 0.8, 0); }).kind(), ErrorKind::ClassTooSmall);
  EXPECT_EQ(error_of([] { stratified_split({"a", "a"}, 1.0, 0); }).kind(), ErrorKind::InvalidArgument);
  const auto sp = stratified_split({"a", "a", "b", "b"}, 0.1, 0);
  EXPECT_EQ(sp.train.size(), 2u);
}

// ---------------------------------------------------------------------------
// Synthetic clouds and suite

TEST(Synth, ShapesMatchTheirDefinition) {
  SynthSpec s;
  s.kind = SynthKind::Sphere;
  s.n_points = 500;
  s.radius = 2.0;
  for (const auto& p : synth_cloud(s).points) EXPECT_NEAR(p.norm(), 2.0, 1e-12);
  s.kind = SynthKind::Plane;
  for (const auto& p : synth_cloud(s).points) {
    EXPECT_EQ(p.z(), 0.0);
    EXPECT_LE(p.head<2>().norm(), 2.0 + 1e-12);
  }
  s.kind = SynthKind::Box;
  s.extents = Vec3(1, 2, 3);
  for (const auto& p : synth_cloud(s).points) {
    const Vec3 q = p.cwiseAbs().cwiseQuotient(0.5 * s.extents);
    EXPECT_NEAR(q.maxCoeff(), 1.0, 1e-12);
  }
}

TEST(Synth, SeededAndExactSize) {
  SynthSpec s;
  s.kind = SynthKind::Plantlike;
  s.n_points = 1234;
  s.noise = 0.01;
  s.seed = 3;
  const auto a = synth_cloud(s);
  EXPECT_EQ(a.size(), 1234u);
  EXPECT_EQ(a.points, synth_cloud(s).points);
  s.seed = 4;
  EXPECT_NE(a.points, synth_cloud(s).points);
  EXPECT_EQ(synth_kind_from_string("plantlike"), SynthKind::Plantlike);
  EXPECT_EQ(error_of([] { synth_kind_from_string("torus"); }).kind(), ErrorKind::InvalidSpec);
}

TEST(SyntheticSuite, DefaultIsBalancedThreeClasses) {
  const Dataset d = synthetic_dataset({});
  ASSERT_EQ(d.size(), 135u);
  std::map<std::string, int> cond, stage;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ++cond[d.condition[i]];
    ++stage[d.stage[i]];
  }
  EXPECT_EQ(cond, (std::map<std::string, int>{{"box", 45}, {"plantlike", 45}, {"sphere", 45}}));
  EXPECT_EQ(stage, (std::map<std::string, int>{{"stage1", 45}, {"stage2", 45}, {"stage3", 45}}));
  EXPECT_EQ(d.load(7).points, synthetic_dataset({}).load(7).points);
}

TEST(SyntheticSuite, RejectsBadSpecs) {
  EXPECT_EQ(error_of([] { synthetic_dataset({1, 45, 3000, 21, 7}); }).kind(), ErrorKind::InvalidArgument);
  EXPECT_EQ(error_of([] { synthetic_dataset({6, 45, 3000, 21, 7}); }).kind(), ErrorKind::InvalidArgument);
  EXPECT_EQ(error_of([] { synthetic_dataset({3, 1, 3000, 21, 7}); }).kind(), ErrorKind::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Report

AccuracyTable sample_table() {
  AccuracyTable t;
  t.name = "demo";
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) t.cells[r][c] = summarize({100.0});
  t.cells[0][1].state = Cell::State::Skipped;
  t.cells[2][3] = summarize({80.0, 90.0});
  t.cells[3][0] = Cell{};
  t.metadata = {{"seed", "42"}, {"note", "a: b"}};
  return t;
}

TEST(Report, CsvRowOrderAndRoundTrip) {
  const AccuracyTable t = sample_table();
  const std::string csv = emit_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
  std::vector<std::string> labels;
  for (const auto& p : kPairOrder) labels.push_back(pair_label(p));
  EXPECT_EQ(labels, (std::vector<std::string>{"Harris-SHOT", "ISS-SHOT", "SIFT-SHOT", "Harris-SIFT", "ISS-SIFT", "SIFT-SIFT"}));
  EXPECT_NE(csv.find("Harris-SHOT,100.00,skipped,100.00,100.00\n"), std::string::npos);
  EXPECT_NE(csv.find("SIFT-SHOT,100.00,100.00,100.00,85.00 +/- 7.07\n"), std::string::npos);
  EXPECT_NE(csv.find("Harris-SIFT,-,"), std::string::npos);

  const auto back = parse_report_csv(csv + "\n" + csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "demo");
  EXPECT_EQ(back[0].metadata, t.metadata);
  EXPECT_EQ(emit_csv(back[1]), csv);
}

TEST(Report, MarkdownAllHundred) {
  AccuracyTable t;
  t.name = "all";
  for (auto& row : t.cells)
    for (auto& c : row) c = summarize({100.0});
  const std::string md = emit_markdown(t);
  EXPECT_NE(md.find("| Pair | Accuracy (FV) condition | Accuracy (FV) stage | Accuracy (VLAD) condition | Accuracy (VLAD) stage |"),
            std::string::npos);
  for (const auto& p : kPairOrder) {
    EXPECT_NE(md.find("| " + pair_label(p) + " | 100.00 | 100.00 | 100.00 | 100.00 |"), std::string::npos);
  }
}

TEST(Report, CellParsing) {
  EXPECT_EQ(parse_cell("88.89").mean, 88.89);
  EXPECT_EQ(parse_cell("skipped").state, Cell::State::Skipped);
  EXPECT_EQ(parse_cell("-").state, Cell::State::NotRun);
  EXPECT_EQ(error_of([] { parse_cell("88.89x"); }).kind(), ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { parse_report_csv("ISS-SHOT,1,2,3,4\n"); }).kind(), ErrorKind::ParseError);
  EXPECT_EQ(report_format_from_string("markdown"), ReportFormat::Markdown);
}

TEST(Report, TrendCheck) {
  AccuracyTable t;
  EXPECT_FALSE(check_trends(t).evaluable);
  for (auto& row : t.cells) {
    row[0] = summarize({90.0});
    row[1] = summarize({60.0});
    row[2] = summarize({90.0});
    row[3] = summarize({60.0});
  }
  t.cells[0][0] = summarize({70.0});
  t.cells[0][2] = summarize({70.0});
  auto c = check_trends(t);
  EXPECT_TRUE(c.evaluable);
  EXPECT_TRUE(c.passed) << c.detail;
  t.cells[0][0] = summarize({85.0});
  t.cells[0][2] = summarize({85.0});
  EXPECT_FALSE(check_trends(t).passed);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.k = 4;
  c.seed = 9;
  c.repeats = 3;
  c.pairs = {kPairOrder[1], kPairOrder[5]};
  c.encoders = {EncoderKind::Vlad};
  c.tasks = {Task::Stage};
  c.iss.gamma_21 = 0.9;
  c.svm.standardization = Standardization::PerDimension;
  c.gmm.variance_floor_rel = 0.01;
  const nlohmann::json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_from_json(nlohmann::json{{"k", 16}}).k, 16u);
  EXPECT_EQ(error_of([] { config_from_json(nlohmann::json{{"svm", {{"standardization", "zscore"}}}}); }).kind(),
            ErrorKind::ParseError);
  EXPECT_EQ(error_of([] { config_from_json(nlohmann::json{{"pairs", {"ISS-FPFH"}}}); }).kind(), ErrorKind::InvalidArgument);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.train_ratio = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.pairs.clear();
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------------------
// End-to-end runner on a small suite

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.pairs = {pair_from_string("ISS-SHOT")};
  c.k = 2;
  c.seed = 3;
  return c;
}

Dataset small_suite() { return synthetic_dataset({2, 6, 800, 21, 3}); }

TEST(RunExperiment, SmallSuiteFillsRequestedCellsDeterministically) {
  const AccuracyTable a = run_experiment(small_config(), small_suite());
  const AccuracyTable b = run_experiment(small_config(), small_suite());
  EXPECT_EQ(emit_csv(a), emit_csv(b));
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(a.cells[r][c].state, r == 1 ? Cell::State::Done : Cell::State::NotRun);
      if (r == 1) {
        EXPECT_GE(a.cells[r][c].mean, 0.0);
        EXPECT_LE(a.cells[r][c].mean, 100.0);
      }
    }
  }
  EXPECT_EQ(a.metadata.front(), (std::pair<std::string, std::string>{"dataset", "synthetic"}));
}

TEST(RunExperiment, RepeatsReportMeanAndSd) {
  ExperimentConfig c = small_config();
  c.repeats = 2;
  c.encoders = {EncoderKind::Vlad};
  c.tasks = {Task::Condition};
  const AccuracyTable t = run_experiment(c, small_suite());
  EXPECT_EQ(t.cells[1][2].n, 2u);
  EXPECT_EQ(t.cells[1][0].state, Cell::State::NotRun);
}

TEST(RunExperiment, StarvedPairIsSkippedWithReason) {
  ExperimentConfig c = small_config();
  c.min_keypoints = 100000;
  const AccuracyTable t = run_experiment(c, small_suite());
  for (const auto& cell : t.cells[1]) EXPECT_EQ(cell.state, Cell::State::Skipped);
  bool found = false;
  for (const auto& [k, v] : t.metadata) found |= k == "skipped ISS-SHOT";
  EXPECT_TRUE(found);
}

TEST(RunExperiment, MissingCloudNamesPathAndCell) {
  fixtures::TempDir dir("harness_missing");
  std::string text = "path,species,condition,replicate,day\n";
  for (int i = 0; i < 6; ++i) {
    text += "cloud" + std::to_string(i) + ".ply,s," + (i % 2 ? "heat" : "control") + ",1," + std::to_string(i) + "\n";
  }
  dir.write("m.csv", text);
  const Dataset d = dataset_from_manifest(load_manifest(dir.file("m.csv")));
  const Error e = error_of([&] { run_experiment(small_config(), d); });
  EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  const std::string what = e.what();
  EXPECT_NE(what.find("cloud0.ply"), std::string::npos) << what;
  EXPECT_NE(what.find("ISS-SHOT"), std::string::npos) << what;
}

TEST(RunExperiment, SpeciesFilterAndAverage) {
  auto records = days_manifest(1, 3, "a");
  const auto b = days_manifest(1, 3, "b");
  records.insert(records.end(), b.begin(), b.end());
  const Dataset d = dataset_from_manifest(records, "m");
  EXPECT_EQ(species_list(d), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(filter_species(d, "b").ids, (std::vector<std::string>{"p1", "p2", "p3"}));
  EXPECT_EQ(error_of([&] { filter_species(d, "c"); }).kind(), ErrorKind::EmptySet);

  AccuracyTable t1, t2;
  t1.cells[0][0] = summarize({80.0});
  t2.cells[0][0] = summarize({90.0});
  t2.cells[1][0].state = Cell::State::Skipped;
  const AccuracyTable avg = average_tables({t1, t2});
  EXPECT_DOUBLE_EQ(avg.cells[0][0].mean, 85.0);
  EXPECT_EQ(avg.cells[1][0].state, Cell::State::Skipped);
}
