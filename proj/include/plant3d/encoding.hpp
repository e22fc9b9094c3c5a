#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plant3d/error.hpp"

namespace plant3d {

/// Descriptor sets are N x D, one descriptor per row, stored row-major.
using Samples = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KMeansCodebook {
  Eigen::MatrixXd centers;  // k x D
  std::size_t k() const { return static_cast<std::size_t>(centers.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centers.cols()); }
};

struct GmmCodebook {
  Eigen::VectorXd weights;    // k
  Eigen::MatrixXd means;      // k x D
  Eigen::MatrixXd variances;  // k x D, diagonal covariances
  std::size_t k() const { return static_cast<std::size_t>(means.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
};

/// Per-iteration objective values of a fit: k-means inertia after each
/// assignment step, or GMM total log-likelihood before each M-step.
struct FitTrace {
  std::vector<double> objective;
  std::size_t iterations = 0;
};

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kWeightFloor = 1e-12;

struct KMeansParams {
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;
};

struct GmmParams {
  std::size_t max_iterations = 200;
  double tolerance = 1e-7;
  // Floor = max(kVarianceFloor, variance_floor_rel * largest per-dimension data variance).
  double variance_floor_rel = 0.0;
  KMeansParams init;
};

namespace detail {

/// Squared distances N x k via the expansion |x|^2 - 2 x.c + |c|^2, clamped
/// at zero.
inline Eigen::MatrixXd squared_distances(const Samples& x, const Eigen::MatrixXd& centers) {
  Eigen::MatrixXd d = (-2.0 * x * centers.transpose()).eval();
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

/// Exact squared distance, used where ties and zeros matter.
inline double sq_dist(const Samples& x, Eigen::Index i, const Eigen::MatrixXd& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

inline void check_samples(const Samples& x, std::size_t k, const char* what) {
  if (k == 0) fail(ErrorKind::InvalidK, std::string(what) + " needs k >= 1");
  if (static_cast<std::size_t>(x.rows()) < k) {
    fail(ErrorKind::TooFewSamples, std::string(what) + " needs at least k=" + std::to_string(k) + " samples, got " +
                                       std::to_string(x.rows()));
  }
  if (x.cols() == 0) fail(ErrorKind::DimensionMismatch, std::string(what) + " needs D >= 1");
  if (!x.allFinite()) fail(ErrorKind::InvalidArgument, std::string(what) + " samples must be finite");
}

/// Nearest center per row, ties to the lower index. Candidates are screened
/// with the expanded form and compared with exact distances.
inline std::vector<Eigen::Index> assign_nearest(const Samples& x, const Eigen::MatrixXd& centers,
                                                Eigen::VectorXd* dist = nullptr) {
  std::vector<Eigen::Index> label(static_cast<std::size_t>(x.rows()), 0);
  if (dist) dist->resize(x.rows());
  const Eigen::MatrixXd approx = squared_distances(x, centers);
  const Eigen::VectorXd cnorm = centers.rowwise().squaredNorm();
  const double cmax = cnorm.size() ? cnorm.maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double slack = 1e-9 * (x.row(i).squaredNorm() + cmax) + 1e-300;
    const double lo = approx.row(i).minCoeff();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
      if (approx(i, j) > lo + slack) continue;
      const double d = sq_dist(x, i, centers, j);
      if (d < best) {
        best = d;
        label[static_cast<std::size_t>(i)] = j;
      }
    }
    if (dist) (*dist)(i) = best;
  }
  return label;
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Per-sample, per-component log(w_j N(x_i | mu_j, var_j)), N x k.
inline Eigen::MatrixXd weighted_log_densities(const GmmCodebook& g, const Samples& x, const Samples& x2) {
  const Eigen::Index d = x.cols();
  const Eigen::MatrixXd inv_var = g.variances.cwiseInverse();
  Eigen::MatrixXd out = -0.5 * (x2 * inv_var.transpose() - 2.0 * x * g.means.cwiseProduct(inv_var).transpose());
  Eigen::RowVectorXd constant(g.means.rows());
  for (Eigen::Index j = 0; j < g.means.rows(); ++j) {
    const double quad = g.means.row(j).cwiseAbs2().cwiseProduct(inv_var.row(j)).sum();
    const double logdet = g.variances.row(j).array().log().sum();
    const double logw = g.weights(j) > 0.0 ? std::log(g.weights(j)) : -std::numeric_limits<double>::infinity();
    constant(j) = logw - 0.5 * (quad + logdet + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
  }
  out.rowwise() += constant;
  return out;
}

}  // namespace detail

/// Sum of squared distances from each sample to its nearest center.
inline double inertia(const KMeansCodebook& cb, const Samples& x) {
  Eigen::VectorXd d;
  detail::assign_nearest(x, cb.centers, &d);
  return d.sum();
}

/// Lloyd iterations from k-means++ seeds drawn with mt19937_64(seed).
/// Empty clusters move to the sample farthest from its assigned center.
inline KMeansCodebook fit_kmeans(const Samples& x, std::size_t k, std::uint64_t seed, const KMeansParams& params = {},
                                 FitTrace* trace = nullptr) {
  detail::check_samples(x, k, "k-means");
  const Eigen::Index n = x.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  std::mt19937_64 rng(seed);

  KMeansCodebook cb;
  cb.centers.resize(kk, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  const auto first = static_cast<Eigen::Index>(std::uniform_int_distribution<std::uint64_t>(0, static_cast<std::uint64_t>(n - 1))(rng));
  cb.centers.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = detail::sq_dist(x, i, cb.centers, 0);
  for (Eigen::Index c = 1; c < kk; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
      }
    }
    cb.centers.row(c) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), detail::sq_dist(x, i, cb.centers, c));
  }

  double previous = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  Eigen::VectorXd dist;
  while (true) {
    const auto label = detail::assign_nearest(x, cb.centers, &dist);
    const double current = dist.sum();
    if (trace) trace->objective.push_back(current);
    ++it;
    if (std::isfinite(previous) && previous - current <= params.tolerance * previous) break;
    if (current == 0.0 || it >= params.max_iterations) break;
    previous = current;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, x.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(label[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index j = 0; j < kk; ++j) {
      const std::size_t cnt = counts[static_cast<std::size_t>(j)];
      if (cnt > 0) {
        cb.centers.row(j) = sums.row(j) / static_cast<double>(cnt);
        continue;
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      cb.centers.row(j) = x.row(far);
      dist(far) = 0.0;
    }
  }
  if (trace) trace->iterations = it;
  return cb;
}

/// Total log-likelihood of the samples under the mixture.
inline double log_likelihood(const GmmCodebook& g, const Samples& x) {
  const Eigen::MatrixXd lp = detail::weighted_log_densities(g, x, x.cwiseAbs2());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) ll += detail::log_sum_exp(lp.row(i));
  return ll;
}

/// Diagonal-covariance EM initialized from fit_kmeans with the same seed.
/// Variances are floored at kVarianceFloor; a component that loses all
/// responsibility keeps its parameters with zero mass.
inline GmmCodebook fit_gmm(const Samples& x, std::size_t k, std::uint64_t seed, const GmmParams& params = {},
                           FitTrace* trace = nullptr) {
  detail::check_samples(x, k, "GMM");
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  const KMeansCodebook km = fit_kmeans(x, k, seed, params.init);
  const auto label = detail::assign_nearest(x, km.centers);

  GmmCodebook g;
  g.means = km.centers;
  g.variances = Eigen::MatrixXd::Zero(kk, dim);
  g.weights = Eigen::VectorXd::Zero(kk);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = label[static_cast<std::size_t>(i)];
    g.variances.row(j) += (x.row(i) - g.means.row(j)).cwiseAbs2();
    g.weights(j) += 1.0;
  }
  for (Eigen::Index j = 0; j < kk; ++j) {
    if (g.weights(j) > 0.0) g.variances.row(j) /= g.weights(j);
  }
  const Eigen::RowVectorXd data_mean = x.colwise().mean();
  const double max_data_var = ((x.rowwise() - data_mean).cwiseAbs2().colwise().sum() / static_cast<double>(n)).maxCoeff();
  const double floor = std::max(kVarianceFloor, params.variance_floor_rel * max_data_var);
  g.variances = g.variances.cwiseMax(floor);
  g.weights /= static_cast<double>(n);

  const Samples x2 = x.cwiseAbs2();
  double previous = -std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (true) {
    Eigen::MatrixXd resp = detail::weighted_log_densities(g, x, x2);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = detail::log_sum_exp(resp.row(i));
      ll += lse;
      resp.row(i) = (resp.row(i).array() - lse).exp();
    }
    if (trace) trace->objective.push_back(ll);
    ++it;
    if (std::isfinite(previous) && ll - previous <= params.tolerance * std::abs(previous)) break;
    if (it >= params.max_iterations) break;
    previous = ll;

    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    const Eigen::MatrixXd sx = resp.transpose() * x;
    const Eigen::MatrixXd sx2 = resp.transpose() * x2;
    for (Eigen::Index j = 0; j < kk; ++j) {
      if (!(nk(j) > 0.0)) {
        g.weights(j) = 0.0;
        continue;
      }
      g.weights(j) = nk(j) / static_cast<double>(n);
      g.means.row(j) = sx.row(j) / nk(j);
      const Eigen::RowVectorXd second = sx2.row(j) / nk(j);
      Eigen::RowVectorXd var = second - g.means.row(j).cwiseAbs2();
      // E[x^2] - mu^2 cancels when the spread is tiny relative to the offset.
      if ((var.array() < 1e-6 * second.array()).any()) {
        var = (resp.col(j).transpose() * (x.rowwise() - g.means.row(j)).cwiseAbs2()) / nk(j);
      }
      g.variances.row(j) = var.cwiseMax(floor);
    }
    g.weights /= g.weights.sum();
  }
  if (trace) trace->iterations = it;
  return g;
}

namespace detail {

inline void check_encode_input(std::size_t dim, const Samples& x) {
  if (x.rows() == 0) fail(ErrorKind::EmptySet, "cannot encode an empty descriptor set");
  if (static_cast<std::size_t>(x.cols()) != dim) {
    fail(ErrorKind::DimensionMismatch, "descriptor dimension " + std::to_string(x.cols()) + " does not match codebook " +
                                           std::to_string(dim));
  }
}

inline void l2_normalize(Eigen::Ref<Eigen::VectorXd> v) {
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

}  // namespace detail

/// Fisher vector of length 2kD: all mean-gradient blocks, then all
/// variance-gradient blocks, followed by signed square root and global L2.
/// `raw` receives the blocks before normalization.
inline Eigen::VectorXd encode_fv(const GmmCodebook& g, const Samples& x, Eigen::VectorXd* raw = nullptr) {
  detail::check_encode_input(g.dim(), x);
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  const Eigen::Index kk = g.means.rows();
  Eigen::MatrixXd resp = detail::weighted_log_densities(g, x, x.cwiseAbs2());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::log_sum_exp(resp.row(i));
    resp.row(i) = (resp.row(i).array() - lse).exp();
  }
  Eigen::VectorXd fv = Eigen::VectorXd::Zero(2 * kk * dim);
  const auto nd = static_cast<double>(n);
  for (Eigen::Index j = 0; j < kk; ++j) {
    const double w = std::max(g.weights(j), kWeightFloor);
    const Eigen::RowVectorXd sigma = g.variances.row(j).cwiseSqrt();
    Eigen::RowVectorXd mean_grad = Eigen::RowVectorXd::Zero(dim);
    Eigen::RowVectorXd var_grad = Eigen::RowVectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gamma = resp(i, j);
      if (gamma == 0.0) continue;
      const Eigen::RowVectorXd z = (x.row(i) - g.means.row(j)).cwiseQuotient(sigma);
      mean_grad += gamma * z;
      var_grad += gamma * (z.cwiseAbs2().array() - 1.0).matrix();
    }
    fv.segment(j * dim, dim) = mean_grad.transpose() / (nd * std::sqrt(w));
    fv.segment((kk + j) * dim, dim) = var_grad.transpose() / (nd * std::sqrt(2.0 * w));
  }
  if (raw) *raw = fv;
  fv = fv.unaryExpr([](double v) { return v < 0.0 ? -std::sqrt(-v) : std::sqrt(v); });
  detail::l2_normalize(fv);
  return fv;
}

/// VLAD of length kD: residual sums per nearest center (ties to the lower
/// index), each block L2-normalized, then global L2.
inline Eigen::VectorXd encode_vlad(const KMeansCodebook& cb, const Samples& x) {
  detail::check_encode_input(cb.dim(), x);
  const Eigen::Index dim = x.cols();
  const auto label = detail::assign_nearest(x, cb.centers);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cb.centers.rows() * dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index j = label[static_cast<std::size_t>(i)];
    v.segment(j * dim, dim) += (x.row(i) - cb.centers.row(j)).transpose();
  }
  for (Eigen::Index j = 0; j < cb.centers.rows(); ++j) detail::l2_normalize(v.segment(j * dim, dim));
  detail::l2_normalize(v);
  return v;
}

}  // namespace plant3d
