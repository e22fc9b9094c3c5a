#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plant3d/error.hpp"

namespace plant3d {

/// One sample per row.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// PerDimension scales every feature to unit variance. Pooled centers every
/// feature and divides all of them by one shared stdev (RMS of the
/// per-dimension stdevs), which keeps the relative scale of the features.
enum class Standardization { PerDimension, Pooled };

struct TrainConfig {
  Standardization standardization = Standardization::Pooled;
  double c_reg = 1.0;
  std::size_t epochs = 200;
  double tolerance = 1e-5;
  std::uint64_t seed = 42;
};

/// One-vs-all linear model over standardized features. Row c of `weights`
/// and entry c of `biases` score class `classes[c]`.
struct LinearSvmModel {
  std::vector<std::string> classes;
  Eigen::MatrixXd weights;  // classes x D
  Eigen::VectorXd biases;
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

namespace detail {

/// L2-regularized hinge objective lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b))).
inline double svm_objective(const FeatureMatrix& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                            double lambda) {
  const Eigen::VectorXd margin = y.cwiseProduct((z * w).array().matrix() + Eigen::VectorXd::Constant(z.rows(), b));
  const double hinge = (1.0 - margin.array()).max(0.0).sum() / static_cast<double>(z.rows());
  return 0.5 * lambda * w.squaredNorm() + hinge;
}

/// Pegasos stochastic subgradient descent with lambda = 1 / (C N). The bias
/// is learned as the weight of a constant feature, so it is regularized too.
/// Returns the iterate with the best objective seen at an epoch end.
inline void train_binary(const FeatureMatrix& z, const Eigen::VectorXd& y, const TrainConfig& cfg,
                         std::uint64_t seed, Eigen::VectorXd& w_out, double& b_out) {
  const Eigen::Index n = z.rows();
  const double lambda = 1.0 / (cfg.c_reg * static_cast<double>(n));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(z.cols());
  double b = 0.0;
  w_out = w;
  b_out = b;
  double best = svm_objective(z, y, w, b, lambda);
  double previous = best;
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const Eigen::Index i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = y(i) * (z.row(i).dot(w) + b);
      const double shrink = 1.0 - eta * lambda;
      w *= shrink;
      b *= shrink;
      if (margin < 1.0) {
        w += (eta * y(i)) * z.row(i).transpose();
        b += eta * y(i);
      }
    }
    const double obj = svm_objective(z, y, w, b, lambda);
    if (obj < best) {
      best = obj;
      w_out = w;
      b_out = b;
    }
    if (std::abs(previous - obj) <= cfg.tolerance * std::max(std::abs(previous), 1e-12)) break;
    previous = obj;
  }
}

}  // namespace detail

inline Eigen::VectorXd standardize(const LinearSvmModel& m, const Eigen::VectorXd& x) {
  return (x - m.mean).cwiseQuotient(m.stdev);
}

inline LinearSvmModel train_svm_ova(const FeatureMatrix& x, const std::vector<std::string>& y,
                                    const TrainConfig& cfg = {}) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    fail(ErrorKind::LengthMismatch, "feature rows (" + std::to_string(x.rows()) + ") and labels (" +
                                           std::to_string(y.size()) + ") differ");
  }
  if (y.size() < 2) fail(ErrorKind::TooFewSamples, "SVM training needs at least 2 samples");
  if (!x.allFinite()) fail(ErrorKind::InvalidArgument, "SVM features must be finite");
  if (!(cfg.c_reg > 0.0) || cfg.epochs == 0 || !(cfg.tolerance >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "SVM config needs c_reg > 0, epochs >= 1, tolerance >= 0");
  }
  LinearSvmModel m;
  m.classes = y;
  std::sort(m.classes.begin(), m.classes.end());
  m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
  if (m.classes.size() < 2) fail(ErrorKind::SingleClass, "SVM training needs at least 2 distinct labels");

  const auto n = static_cast<double>(x.rows());
  m.mean = x.colwise().mean().transpose();
  m.stdev = ((x.rowwise() - m.mean.transpose()).cwiseAbs2().colwise().sum().transpose() / n).cwiseSqrt();
  if (cfg.standardization == Standardization::Pooled) {
    const double pooled = std::sqrt(m.stdev.squaredNorm() / static_cast<double>(m.stdev.size()));
    m.stdev.setConstant(pooled);
  }
  for (Eigen::Index j = 0; j < m.stdev.size(); ++j) {
    if (!(m.stdev(j) > 0.0)) m.stdev(j) = 1.0;
  }
  const FeatureMatrix z = (x.rowwise() - m.mean.transpose()).array().rowwise() / m.stdev.transpose().array();

  const auto nc = static_cast<Eigen::Index>(m.classes.size());
  m.weights.resize(nc, x.cols());
  m.biases.resize(nc);
  for (Eigen::Index c = 0; c < nc; ++c) {
    Eigen::VectorXd target(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      target(i) = y[static_cast<std::size_t>(i)] == m.classes[static_cast<std::size_t>(c)] ? 1.0 : -1.0;
    }
    Eigen::VectorXd w;
    double b = 0.0;
    detail::train_binary(z, target, cfg, cfg.seed + static_cast<std::uint64_t>(c), w, b);
    m.weights.row(c) = w.transpose();
    m.biases(c) = b;
  }
  return m;
}

/// Per-class decision values for x.
inline Eigen::VectorXd decision_values(const LinearSvmModel& m, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != m.dim()) {
    fail(ErrorKind::DimensionMismatch,
         "feature dimension " + std::to_string(x.size()) + " does not match model " + std::to_string(m.dim()));
  }
  return m.weights * standardize(m, x) + m.biases;
}

/// Highest-scoring class; ties go to the class listed first.
inline const std::string& predict(const LinearSvmModel& m, const Eigen::VectorXd& x) {
  const Eigen::VectorXd s = decision_values(m, x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < s.size(); ++c) {
    if (s(c) > s(best)) best = c;
  }
  return m.classes[static_cast<std::size_t>(best)];
}

inline std::vector<std::string> predict_all(const LinearSvmModel& m, const FeatureMatrix& x) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict(m, x.row(i).transpose()));
  return out;
}

/// 100 * matches / n rounded half-up to 2 decimals, computed in integers so
/// that e.g. 24/27 gives exactly 88.89.
inline double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& truth) {
  if (predictions.size() != truth.size()) {
    fail(ErrorKind::LengthMismatch, "predictions (" + std::to_string(predictions.size()) + ") and truth (" +
                                        std::to_string(truth.size()) + ") differ in length");
  }
  if (truth.empty()) fail(ErrorKind::Empty, "accuracy of an empty set");
  std::uint64_t matches = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) matches += predictions[i] == truth[i] ? 1 : 0;
  const std::uint64_t n = truth.size();
  const std::uint64_t hundredths = (20000 * matches + n) / (2 * n);
  return static_cast<double>(hundredths) / 100.0;
}

}  // namespace plant3d
