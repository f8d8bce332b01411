#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "layersynth/mat_core.hpp"
#include "layersynth/system_model.hpp"

namespace test_support {

using layersynth::Mat;
using layersynth::Vec;

// Reference values produced by tests/oracles/generate.py.
inline const nlohmann::json& oracle() {
  static const nlohmann::json data = [] {
    std::ifstream in(LAYERSYNTH_ORACLE_FILE);
    return nlohmann::json::parse(in);
  }();
  return data;
}

inline Mat to_mat(const nlohmann::json& j) {
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.at(0).size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

inline std::string config_path(const std::string& name) {
  return std::string(LAYERSYNTH_CONFIG_DIR) + "/" + name + ".json";
}

inline layersynth::Architecture bundled(const std::string& name) {
  return layersynth::load_config(*layersynth::bundled_config(name));
}

inline Mat mat1(double v) { return Mat::Constant(1, 1, v); }
inline Vec vec1(double v) { return Vec::Constant(1, v); }

// Relative Frobenius distance.
inline double rel_diff(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

inline Mat random_psd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Mat a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose();
}

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  Mat a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a;
}

// Scalar system x+ = a x + b u + w, y = c x + v.
inline layersynth::LinearSystem scalar_system(double a, double b, double c, double w, double v,
                                              double mu0 = 0.0) {
  return {mat1(a), mat1(b), mat1(c), mat1(w), mat1(v), vec1(mu0)};
}

// Architecture with both layers equal to `sys`.
inline layersynth::Architecture twin_architecture(const layersynth::LinearSystem& sys) {
  layersynth::Architecture arch;
  arch.upper = sys;
  arch.lower = sys;
  arch.u_max = 1.0;
  arch.upper_controller.state_penalty = Mat::Identity(sys.states(), sys.states());
  arch.upper_controller.input_penalty = Mat::Identity(sys.inputs(), sys.inputs());
  return arch;
}

}  // namespace test_support
