#include <gtest/gtest.h>

#include <random>

#include "plant3d/classify.hpp"
#include "plant3d/serialize.hpp"

using namespace plant3d;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no plant3d::Error thrown";
  return ErrorKind::InvalidArgument;
}

struct Labeled {
  FeatureMatrix x;
  std::vector<std::string> y;
};

/// Gaussian blobs at distance `sep` along separate axes, with a nuisance
/// dimension of large variance.
Labeled blobs(const std::vector<std::string>& names, int per_class, double sep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const auto dim = static_cast<Eigen::Index>(names.size() + 1);
  Labeled out;
  out.x.resize(static_cast<Eigen::Index>(names.size()) * per_class, dim);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (Eigen::Index d = 0; d < dim; ++d) out.x(row, d) = 0.3 * g(rng);
      out.x(row, static_cast<Eigen::Index>(c)) += sep;
      out.x(row, dim - 1) = 20.0 * g(rng);
      out.y.push_back(names[c]);
    }
  }
  return out;
}

}  // namespace

TEST(Svm, SeparableTwoClassIsPerfect) {
  const Labeled d = blobs({"control", "drought"}, 30, 3.0, 1);
  const auto m = train_svm_ova(d.x, d.y);
  EXPECT_EQ(m.classes, (std::vector<std::string>{"control", "drought"}));
  EXPECT_DOUBLE_EQ(accuracy(predict_all(m, d.x), d.y), 100.0);
  const Labeled held_out = blobs({"control", "drought"}, 20, 3.0, 2);
  EXPECT_DOUBLE_EQ(accuracy(predict_all(m, held_out.x), held_out.y), 100.0);
}

TEST(Svm, ThreeClassesGiveThreeModelsAndSeparate) {
  const Labeled d = blobs({"early", "mid", "late"}, 30, 3.0, 3);
  const auto m = train_svm_ova(d.x, d.y);
  EXPECT_EQ(m.classes, (std::vector<std::string>{"early", "late", "mid"}));
  EXPECT_EQ(m.weights.rows(), 3);
  EXPECT_EQ(m.biases.size(), 3);
  EXPECT_EQ(m.dim(), 4u);
  const Labeled held_out = blobs({"early", "mid", "late"}, 20, 3.0, 4);
  EXPECT_DOUBLE_EQ(accuracy(predict_all(m, held_out.x), held_out.y), 100.0);
}

TEST(Svm, TieGoesToFirstClass) {
  LinearSvmModel m;
  m.classes = {"a", "b", "c"};
  m.weights = Eigen::MatrixXd::Zero(3, 2);
  m.biases = Eigen::Vector3d(0.0, 0.5, 0.5);
  m.mean = Eigen::VectorXd::Zero(2);
  m.stdev = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(predict(m, Eigen::Vector2d(1, 1)), "b");
  m.biases.setZero();
  EXPECT_EQ(predict(m, Eigen::Vector2d(1, 1)), "a");
}

TEST(Svm, InvariantToFeatureRescaling) {
  const Labeled d = blobs({"a", "b", "c"}, 25, 1.5, 5);
  const Labeled test = blobs({"a", "b", "c"}, 25, 1.5, 6);
  for (const auto mode : {Standardization::Pooled, Standardization::PerDimension}) {
    TrainConfig cfg;
    cfg.standardization = mode;
    const auto m = train_svm_ova(d.x, d.y, cfg);
    const auto scaled = train_svm_ova(FeatureMatrix(10.0 * d.x), d.y, cfg);
    EXPECT_EQ(predict_all(m, test.x), predict_all(scaled, FeatureMatrix(10.0 * test.x)));
  }
}

TEST(Svm, PooledKeepsRelativeScale) {
  const Labeled d = blobs({"a", "b"}, 20, 3.0, 7);
  const auto m = train_svm_ova(d.x, d.y);
  EXPECT_TRUE((m.stdev.array() == m.stdev(0)).all());
  TrainConfig per_dim;
  per_dim.standardization = Standardization::PerDimension;
  const auto p = train_svm_ova(d.x, d.y, per_dim);
  EXPECT_GT(p.stdev(2), 10.0 * p.stdev(0));
}

TEST(Svm, ConstantFeatureIsHarmless) {
  Labeled d = blobs({"a", "b"}, 20, 3.0, 8);
  d.x.col(2).setConstant(4.0);
  TrainConfig per_dim;
  per_dim.standardization = Standardization::PerDimension;
  const auto m = train_svm_ova(d.x, d.y, per_dim);
  EXPECT_DOUBLE_EQ(m.stdev(2), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(predict_all(m, d.x), d.y), 100.0);
}

TEST(Svm, DeterministicForSeed) {
  const Labeled d = blobs({"a", "b", "c"}, 20, 1.0, 9);
  const auto m1 = train_svm_ova(d.x, d.y);
  const auto m2 = train_svm_ova(d.x, d.y);
  EXPECT_EQ(m1.weights, m2.weights);
  EXPECT_EQ(m1.biases, m2.biases);
}

TEST(Svm, Errors) {
  const Labeled d = blobs({"a", "b"}, 5, 3.0, 10);
  EXPECT_EQ(kind_of([&] { train_svm_ova(d.x, std::vector<std::string>(10, "a")); }), ErrorKind::SingleClass);
  EXPECT_EQ(kind_of([&] { train_svm_ova(d.x, std::vector<std::string>(3, "a")); }), ErrorKind::LengthMismatch);
  const auto m = train_svm_ova(d.x, d.y);
  EXPECT_EQ(kind_of([&] { predict(m, Eigen::VectorXd::Zero(5)); }), ErrorKind::DimensionMismatch);
  TrainConfig bad;
  bad.c_reg = 0.0;
  EXPECT_EQ(kind_of([&] { train_svm_ova(d.x, d.y, bad); }), ErrorKind::InvalidArgument);
}

TEST(Svm, JsonRoundTripPredictsIdentically) {
  const Labeled d = blobs({"a", "b", "c"}, 20, 1.0, 11);
  const auto m = train_svm_ova(d.x, d.y);
  const auto back = svm_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.classes, m.classes);
  EXPECT_EQ(back.weights, m.weights);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    EXPECT_EQ(decision_values(back, d.x.row(i).transpose()), decision_values(m, d.x.row(i).transpose()));
  }
}

TEST(Accuracy, RoundsHalfUpToHundredths) {
  std::vector<std::string> truth(27, "x"), pred(27, "x");
  for (int i = 0; i < 3; ++i) pred[static_cast<std::size_t>(i)] = "y";
  EXPECT_EQ(accuracy(pred, truth), 88.89);
  EXPECT_EQ(accuracy(truth, truth), 100.0);
  EXPECT_EQ(accuracy(std::vector<std::string>(27, "y"), truth), 0.0);
  // 2/3 = 66.666... -> 66.67; 1/8 = 12.5 exactly; 1/6 = 16.666... -> 16.67.
  EXPECT_EQ(accuracy({"a", "a", "b"}, {"a", "a", "a"}), 66.67);
  EXPECT_EQ(accuracy({"a", "b", "b", "b", "b", "b", "b", "b"}, std::vector<std::string>(8, "a")), 12.5);
  EXPECT_EQ(accuracy({"a", "b", "b", "b", "b", "b"}, std::vector<std::string>(6, "a")), 16.67);
}

TEST(Accuracy, Errors) {
  EXPECT_EQ(kind_of([] { accuracy({"a"}, {"a", "b"}); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([] { accuracy({}, {}); }), ErrorKind::Empty);
}
