#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "plant3d/classify.hpp"
#include "plant3d/detectors.hpp"
#include "plant3d/encoding.hpp"
#include "plant3d/error.hpp"

namespace plant3d {

static_assert(std::endian::native == std::endian::little, "P3DF I/O assumes a little-endian host");

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + path);
  out << bytes;
}

inline nlohmann::json parse_json(const std::string& path, const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path + ": " + e.what());
  }
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) fail(ErrorKind::ParseError, "ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Keypoints: [{"x","y","z","scale","saliency","index"}, ...]

inline nlohmann::json keypoints_to_json(const std::vector<Keypoint>& kps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& k : kps) {
    arr.push_back({{"x", k.position.x()},
                   {"y", k.position.y()},
                   {"z", k.position.z()},
                   {"scale", k.scale},
                   {"saliency", k.saliency},
                   {"index", k.source_index}});
  }
  return arr;
}

inline std::vector<Keypoint> keypoints_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) fail(ErrorKind::ParseError, "keypoints JSON must be an array");
  std::vector<Keypoint> out;
  try {
    for (const auto& e : arr) {
      Keypoint k;
      k.position = Point3(e.at("x").get<double>(), e.at("y").get<double>(), e.at("z").get<double>());
      k.scale = e.value("scale", 1.0);
      k.saliency = e.value("saliency", 0.0);
      k.source_index = e.value("index", -1L);
      out.push_back(k);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("keypoints JSON: ") + e.what());
  }
  return out;
}

inline void save_keypoints(const std::vector<Keypoint>& kps, const std::string& path) {
  detail::write_file(path, keypoints_to_json(kps).dump(2) + "\n");
}

inline std::vector<Keypoint> load_keypoints(const std::string& path) {
  return keypoints_from_json(detail::parse_json(path, detail::read_file(path)));
}

// ---------------------------------------------------------------------------
// P3DF: "P3DF", u32 count, u32 dim, count*dim float32, all little-endian.

inline std::string p3df_bytes(const Eigen::MatrixXd& rows) {
  std::string out = "P3DF";
  const std::array<std::uint32_t, 2> header = {static_cast<std::uint32_t>(rows.rows()),
                                               static_cast<std::uint32_t>(rows.cols())};
  out.append(reinterpret_cast<const char*>(header.data()), sizeof(header));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const auto f = static_cast<float>(rows(i, j));
      out.append(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  return out;
}

inline Eigen::MatrixXd parse_p3df(const std::string& bytes, const std::string& path = "<memory>") {
  if (bytes.size() < 12 || bytes.compare(0, 4, "P3DF") != 0) fail(ErrorKind::ParseError, path + ": not a P3DF file");
  std::uint32_t count = 0, dim = 0;
  std::memcpy(&count, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  const std::uint64_t expected = 12 + 4ULL * count * dim;
  if (bytes.size() != expected) {
    fail(ErrorKind::ParseError, path + ": P3DF payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                                    std::to_string(expected));
  }
  Eigen::MatrixXd m(count, dim);
  const char* p = bytes.data() + 12;
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j, p += 4) {
      float f = 0.0F;
      std::memcpy(&f, p, 4);
      m(i, j) = f;
    }
  }
  return m;
}

inline void save_p3df(const Eigen::MatrixXd& rows, const std::string& path) {
  detail::write_file(path, p3df_bytes(rows));
}

inline Eigen::MatrixXd load_p3df(const std::string& path) { return parse_p3df(detail::read_file(path), path); }

/// One descriptor per line, comma-separated.
inline std::string descriptors_csv(const Eigen::MatrixXd& rows) {
  std::ostringstream out;
  out << std::setprecision(9);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << rows(i, j);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Codebooks and models

inline nlohmann::json to_json(const KMeansCodebook& cb) {
  return {{"type", "kmeans"}, {"k", cb.k()}, {"D", cb.dim()}, {"centers", detail::matrix_to_json(cb.centers)}};
}

inline nlohmann::json to_json(const GmmCodebook& g) {
  return {{"type", "gmm"},
          {"k", g.k()},
          {"D", g.dim()},
          {"weights", detail::to_std(g.weights)},
          {"means", detail::matrix_to_json(g.means)},
          {"variances", detail::matrix_to_json(g.variances)}};
}

inline nlohmann::json to_json(const LinearSvmModel& m) {
  return {{"classes", m.classes},
          {"weights", detail::matrix_to_json(m.weights)},
          {"biases", detail::to_std(m.biases)},
          {"mean", detail::to_std(m.mean)},
          {"stdev", detail::to_std(m.stdev)}};
}

inline KMeansCodebook kmeans_from_json(const nlohmann::json& j) {
  try {
    return {detail::matrix_from_json(j.at("centers"))};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("k-means codebook JSON: ") + e.what());
  }
}

inline GmmCodebook gmm_from_json(const nlohmann::json& j) {
  try {
    GmmCodebook g;
    g.weights = detail::vector_from_json(j.at("weights"));
    g.means = detail::matrix_from_json(j.at("means"));
    g.variances = detail::matrix_from_json(j.at("variances"));
    if (g.means.rows() != g.weights.size() || g.variances.rows() != g.means.rows() ||
        g.variances.cols() != g.means.cols()) {
      fail(ErrorKind::ParseError, "GMM codebook JSON has inconsistent shapes");
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("GMM codebook JSON: ") + e.what());
  }
}

inline LinearSvmModel svm_from_json(const nlohmann::json& j) {
  try {
    LinearSvmModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.weights = detail::matrix_from_json(j.at("weights"));
    m.biases = detail::vector_from_json(j.at("biases"));
    m.mean = detail::vector_from_json(j.at("mean"));
    m.stdev = detail::vector_from_json(j.at("stdev"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("SVM model JSON: ") + e.what());
  }
}

}  // namespace plant3d
