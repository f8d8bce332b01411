#include "layersynth/system_model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/SVD>
#include <json.hpp>

#include "layersynth/errors.hpp"
#include "json_util.hpp"

namespace layersynth {

using json = nlohmann::json;

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  grid.reserve(40);
  for (int k = 1; k <= 40; ++k) grid.push_back(static_cast<double>(k) / 41.0);
  return grid;
}

namespace {

std::string dims(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void expect_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols,
                  std::string_view field) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InputError("dimension mismatch in " + std::string(field) + ": expected " +
                     std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                     dims(m));
  }
}

bool is_zero(const Mat& m) { return m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0; }

}  // namespace

void validate_system(const LinearSystem& sys, std::string_view name) {
  const std::string pre(name);
  const Eigen::Index n = sys.A.rows();
  if (n == 0) throw InputError(pre + ".A must be non-empty");
  expect_shape(sys.A, n, n, pre + ".A");
  if (sys.B.rows() != n) {
    throw InputError("dimension mismatch in " + pre + ".B: expected " +
                     std::to_string(n) + " rows, got " + dims(sys.B));
  }
  if (sys.C.cols() != n || sys.C.rows() == 0) {
    throw InputError("dimension mismatch in " + pre + ".C: expected p x " +
                     std::to_string(n) + ", got " + dims(sys.C));
  }
  const Eigen::Index p = sys.C.rows();
  expect_shape(sys.sigma_w, n, n, pre + ".Sigma_w");
  expect_shape(sys.sigma_v, p, p, pre + ".Sigma_v");
  if (sys.mu0.size() != n) {
    throw InputError("dimension mismatch in " + pre + ".mu0: expected " +
                     std::to_string(n) + " entries, got " +
                     std::to_string(sys.mu0.size()));
  }
  for (const auto& [m, field] :
       {std::pair<const Mat*, const char*>{&sys.A, "A"}, {&sys.B, "B"}, {&sys.C, "C"},
        {&sys.sigma_w, "Sigma_w"}, {&sys.sigma_v, "Sigma_v"}}) {
    if (!m->allFinite()) throw InputError(pre + "." + field + " has non-finite entries");
  }
  if (!sys.mu0.allFinite()) throw InputError(pre + ".mu0 has non-finite entries");

  mat::require_psd(sys.sigma_w, (pre + ".Sigma_w").c_str());
  // A fully noiseless system (both covariances zero) is the only case where a
  // singular measurement covariance is accepted.
  const bool noiseless = is_zero(sys.sigma_w) && is_zero(sys.sigma_v);
  if (!noiseless) {
    if (!mat::is_symmetric(sys.sigma_v) || mat::min_eigenvalue(sys.sigma_v) <= 0.0) {
      throw InputError(pre + ": Sigma_v must be positive definite");
    }
  }
}

Architecture validate(const Architecture& arch) {
  validate_system(arch.upper, "upper");
  validate_system(arch.lower, "lower");
  if (arch.upper.outputs() != arch.lower.outputs()) {
    throw InputError("output dimension mismatch: upper p=" +
                     std::to_string(arch.upper.outputs()) + ", lower p=" +
                     std::to_string(arch.lower.outputs()));
  }
  if (!(arch.u_max > 0.0) || !std::isfinite(arch.u_max)) {
    throw InputError("u_max must be a positive finite number");
  }
  const auto& uc = arch.upper_controller;
  if (uc.kind != "lqg") {
    throw InputError("upper_controller.kind must be \"lqg\"");
  }
  const Eigen::Index n1 = arch.upper.states();
  const Eigen::Index m1 = arch.upper.inputs();
  expect_shape(uc.state_penalty, n1, n1, "upper_controller.P_Q");
  expect_shape(uc.input_penalty, m1, m1, "upper_controller.P_R");
  mat::require_psd(uc.state_penalty, "upper_controller.P_Q");
  if (m1 > 0 && (!mat::is_symmetric(uc.input_penalty) ||
                 mat::min_eigenvalue(uc.input_penalty) <= 0.0)) {
    throw InputError("upper_controller.P_R must be positive definite");
  }
  if (arch.synth.lambda_grid.empty()) {
    throw InputError("synth.lambda_grid must be non-empty");
  }
  for (double l : arch.synth.lambda_grid) {
    if (!(l > 0.0 && l < 1.0)) {
      throw InputError("synth.lambda_grid entries must lie in (0, 1)");
    }
  }
  if (!(arch.synth.sdp_tol > 0.0)) throw InputError("synth.sdp_tol must be positive");
  if (!(arch.synth.strict_eps > 0.0)) throw InputError("synth.strict_eps must be positive");
  if (arch.sim.horizon == 0) throw InputError("sim.horizon must be positive");
  if (arch.sim.trials == 0) throw InputError("sim.trials must be positive");
  return arch;
}

bool check_stabilizable(const Mat& a, const Mat& b) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n) {
    throw InputError("check_stabilizable: dimension mismatch");
  }
  Eigen::EigenSolver<Mat> es(a, false);
  using CMat = Eigen::MatrixXcd;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z) < 1.0) continue;
    CMat pbh(n, n + b.cols());
    pbh.leftCols(n) = a.cast<std::complex<double>>() - z * CMat::Identity(n, n);
    pbh.rightCols(b.cols()) = b.cast<std::complex<double>>();
    Eigen::JacobiSVD<CMat> svd(pbh);
    const auto& sv = svd.singularValues();
    const double tol = 1e-8 * std::max(1.0, sv(0));
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv(k) > tol) ++rank;
    }
    if (rank < n) return false;
  }
  return true;
}

std::pair<Mat, Mat> discretize_forward_euler(const Mat& ac, const Mat& bc, double dt) {
  if (ac.rows() != ac.cols()) throw InputError("discretize: Ac must be square");
  if (bc.rows() != ac.rows()) throw InputError("discretize: Bc row mismatch");
  if (!(dt > 0.0)) throw InputError("discretize: dt must be positive");
  Mat a = Mat::Identity(ac.rows(), ac.cols()) + dt * ac;
  Mat b = dt * bc;
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using detail::parse_matrix;
using detail::parse_vector;
using detail::matrix_json;
using detail::vector_json;
using detail::position;


// A covariance may be a full matrix or a flat array holding its diagonal.
Mat parse_covariance(const json& j, const std::string& field) {
  if (j.is_array() && !j.empty() && j.front().is_number()) {
    return parse_vector(j, field).asDiagonal();
  }
  return parse_matrix(j, field);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError("schema: missing field " + where + "." + key);
  return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw InputError("schema: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      throw InputError("schema: unexpected field " + where + "." + it.key());
    }
  }
}

LinearSystem parse_system(const json& j, const std::string& where) {
  reject_unknown(j, {"A", "B", "Ac", "Bc", "dt", "C", "Sigma_w", "Sigma_v", "mu0"}, where);
  const bool discrete = j.contains("A") || j.contains("B");
  const bool continuous = j.contains("Ac") || j.contains("Bc") || j.contains("dt");
  if (discrete && continuous) {
    throw InputError("schema: " + where +
                     " mixes discrete (A, B) and continuous (Ac, Bc, dt) fields");
  }
  LinearSystem sys;
  if (continuous) {
    const Mat ac = parse_matrix(require(j, "Ac", where), where + ".Ac");
    const Mat bc = parse_matrix(require(j, "Bc", where), where + ".Bc");
    const json& dt = require(j, "dt", where);
    if (!dt.is_number()) throw InputError("schema: " + where + ".dt must be a number");
    if (ac.rows() != ac.cols() || bc.rows() != ac.rows()) {
      throw InputError("dimension mismatch in " + where + ".Ac/Bc");
    }
    std::tie(sys.A, sys.B) = discretize_forward_euler(ac, bc, dt.get<double>());
  } else {
    sys.A = parse_matrix(require(j, "A", where), where + ".A");
    sys.B = parse_matrix(require(j, "B", where), where + ".B");
  }
  sys.C = parse_matrix(require(j, "C", where), where + ".C");
  sys.sigma_w = parse_covariance(require(j, "Sigma_w", where), where + ".Sigma_w");
  sys.sigma_v = parse_covariance(require(j, "Sigma_v", where), where + ".Sigma_v");
  sys.mu0 = parse_vector(require(j, "mu0", where), where + ".mu0");
  return sys;
}



json system_json(const LinearSystem& s) {
  return json{{"A", matrix_json(s.A)},           {"B", matrix_json(s.B)},
              {"C", matrix_json(s.C)},           {"Sigma_w", matrix_json(s.sigma_w)},
              {"Sigma_v", matrix_json(s.sigma_v)}, {"mu0", vector_json(s.mu0)}};
}


template <class T>
T get_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw InputError("schema: " + where + "." + key + " must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
      throw InputError("schema: " + where + "." + key + " must be a non-negative integer");
    }
  }
  return v.get<T>();
}

}  // namespace

Architecture load_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError("config parse error at " + position(text, e.byte) + ": " + e.what());
  }
  reject_unknown(root, {"upper", "lower", "u_max", "upper_controller", "sim", "synth"},
                 "config");
  Architecture arch;
  arch.upper = parse_system(require(root, "upper", "config"), "upper");
  arch.lower = parse_system(require(root, "lower", "config"), "lower");
  arch.u_max = get_number<double>(root, "u_max", "config");

  const json& uc = require(root, "upper_controller", "config");
  reject_unknown(uc, {"kind", "P_Q", "P_R"}, "upper_controller");
  const json& kind = require(uc, "kind", "upper_controller");
  if (!kind.is_string()) throw InputError("schema: upper_controller.kind must be a string");
  arch.upper_controller.kind = kind.get<std::string>();
  arch.upper_controller.state_penalty =
      parse_covariance(require(uc, "P_Q", "upper_controller"), "upper_controller.P_Q");
  arch.upper_controller.input_penalty =
      parse_covariance(require(uc, "P_R", "upper_controller"), "upper_controller.P_R");

  if (auto it = root.find("sim"); it != root.end()) {
    reject_unknown(*it, {"horizon", "trials", "seed"}, "sim");
    if (it->contains("horizon")) arch.sim.horizon = get_number<std::size_t>(*it, "horizon", "sim");
    if (it->contains("trials")) arch.sim.trials = get_number<std::size_t>(*it, "trials", "sim");
    if (it->contains("seed")) arch.sim.seed = get_number<std::uint64_t>(*it, "seed", "sim");
  }
  if (auto it = root.find("synth"); it != root.end()) {
    reject_unknown(*it,
                   {"lambda_grid", "sdp_tol", "strict_eps", "use_constructive_fallback",
                    "spectral_R"},
                   "synth");
    if (it->contains("lambda_grid")) {
      const Vec g = parse_vector((*it)["lambda_grid"], "synth.lambda_grid");
      arch.synth.lambda_grid.assign(g.data(), g.data() + g.size());
    }
    if (it->contains("sdp_tol")) arch.synth.sdp_tol = get_number<double>(*it, "sdp_tol", "synth");
    if (it->contains("strict_eps")) {
      arch.synth.strict_eps = get_number<double>(*it, "strict_eps", "synth");
    }
    for (const char* flag : {"use_constructive_fallback", "spectral_R"}) {
      if (!it->contains(flag)) continue;
      const json& v = (*it)[flag];
      if (!v.is_boolean()) {
        throw InputError(std::string("schema: synth.") + flag + " must be a boolean");
      }
      (std::string_view(flag) == "spectral_R" ? arch.synth.spectral_R
                                              : arch.synth.use_constructive_fallback) =
          v.get<bool>();
    }
  }
  return validate(arch);
}

Architecture load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

std::string serialize_config(const Architecture& arch) {
  json root;
  root["upper"] = system_json(arch.upper);
  root["lower"] = system_json(arch.lower);
  root["u_max"] = arch.u_max;
  root["upper_controller"] = json{{"kind", arch.upper_controller.kind},
                                  {"P_Q", matrix_json(arch.upper_controller.state_penalty)},
                                  {"P_R", matrix_json(arch.upper_controller.input_penalty)}};
  root["sim"] = json{{"horizon", arch.sim.horizon},
                     {"trials", arch.sim.trials},
                     {"seed", arch.sim.seed}};
  root["synth"] = json{{"lambda_grid", arch.synth.lambda_grid},
                       {"sdp_tol", arch.synth.sdp_tol},
                       {"strict_eps", arch.synth.strict_eps},
                       {"use_constructive_fallback", arch.synth.use_constructive_fallback},
                       {"spectral_R", arch.synth.spectral_R}};
  return root.dump(2);
}

}  // namespace layersynth
