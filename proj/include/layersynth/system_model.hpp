#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layersynth/mat_core.hpp"

namespace layersynth {

// x_{t+1} = A x_t + B u_t + w_t,  y_t = C x_t + v_t,
// w ~ N(0, sigma_w), v ~ N(0, sigma_v), E[x_0] = mu0.
// The initial covariance is not stored: it is pinned to the steady-state
// estimation error covariance when the system is simulated.
struct LinearSystem {
  Mat A;
  Mat B;
  Mat C;
  Mat sigma_w;
  Mat sigma_v;
  Vec mu0;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  bool operator==(const LinearSystem&) const = default;
};

struct UpperControllerCfg {
  std::string kind = "lqg";
  Mat state_penalty;  // P_Q
  Mat input_penalty;  // P_R

  bool operator==(const UpperControllerCfg&) const = default;
};

// lambda_k = k / 41, k = 1..40.
std::vector<double> default_lambda_grid();

struct SynthCfg {
  std::vector<double> lambda_grid = default_lambda_grid();
  double sdp_tol = 1e-8;
  double strict_eps = 1e-6;
  bool use_constructive_fallback = true;
  // Minimize the spectral norm in the feed-through objective exactly instead
  // of its Frobenius surrogate.
  bool spectral_R = false;

  bool operator==(const SynthCfg&) const = default;
};

struct SimCfg {
  std::size_t horizon = 100;
  std::size_t trials = 200;
  std::uint64_t seed = 0;

  bool operator==(const SimCfg&) const = default;
};

// Two-layer architecture: `upper` is tracked by `lower`. Inputs of the upper
// system are confined to the Euclidean ball of radius u_max.
struct Architecture {
  LinearSystem upper;
  LinearSystem lower;
  double u_max = 1.0;
  UpperControllerCfg upper_controller;
  SimCfg sim;
  SynthCfg synth;

  bool operator==(const Architecture&) const = default;
};

// Checks dimensions, finiteness, covariance definiteness, the shared output
// dimension and u_max > 0. Returns the architecture unchanged or throws InputError.
Architecture validate(const Architecture& arch);

// Checks one system in isolation; `name` prefixes error messages.
void validate_system(const LinearSystem& sys, std::string_view name);

// PBH test: rank [A - z I, B] = n for every eigenvalue |z| >= 1.
bool check_stabilizable(const Mat& a, const Mat& b);

// A = I + dt Ac, B = dt Bc.
std::pair<Mat, Mat> discretize_forward_euler(const Mat& ac, const Mat& bc, double dt);

// Parses and validates the JSON configuration format. Throws InputError with
// line/column information on malformed JSON and names offending fields on
// schema violations.
Architecture load_config(std::string_view text);
Architecture load_config_file(const std::string& path);

// Writes the discrete-time form; load_config(serialize_config(a)) == a.
std::string serialize_config(const Architecture& arch);

// Bundled case-study configurations ("uav", "hexacopter").
std::optional<std::string_view> bundled_config(std::string_view name);
std::vector<std::string> bundled_config_names();

}  // namespace layersynth
