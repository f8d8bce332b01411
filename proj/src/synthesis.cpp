#include "layersynth/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "json_util.hpp"
#include "layersynth/errors.hpp"

namespace layersynth {

using conic::AffineExpr;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

double trace_quad(const Mat& c, const Mat& s) { return (c * s * c.transpose()).trace(); }

}  // namespace

InterfaceMaps solve_interface_maps(const LinearSystem& upper, const LinearSystem& lower) {
  const Eigen::Index n1 = upper.states();
  const Eigen::Index n2 = lower.states();
  const Eigen::Index m2 = lower.inputs();
  const Eigen::Index p = upper.outputs();
  if (lower.outputs() != p) {
    throw InputError("output dimension mismatch: upper p=" + std::to_string(p) +
                     ", lower p=" + std::to_string(lower.outputs()));
  }
  const Eigen::Index np = n2 * n1;
  const Eigen::Index nq = m2 * n1;
  Mat lhs = Mat::Zero(p * n1 + n2 * n1, np + nq);
  Vec rhs = Vec::Zero(lhs.rows());
  const Mat i1 = Mat::Identity(n1, n1);
  const Mat i2 = Mat::Identity(n2, n2);
  lhs.block(0, 0, p * n1, np) = mat::kron(i1, lower.C);
  lhs.block(p * n1, 0, n2 * n1, np) =
      mat::kron(upper.A.transpose(), i2) - mat::kron(i1, lower.A);
  lhs.block(p * n1, np, n2 * n1, nq) = -mat::kron(i1, lower.B);
  rhs.head(p * n1) = mat::vec(upper.C);

  const Vec sol = mat::minnorm_lstsq(lhs, rhs);
  InterfaceMaps maps;
  maps.P = mat::unvec(sol.head(np), n2, n1);
  maps.Q = mat::unvec(sol.tail(nq), m2, n1);
  maps.residual_CP = (lower.C * maps.P - upper.C).norm();
  maps.residual_PAQ = (maps.P * upper.A - lower.A * maps.P - lower.B * maps.Q).norm();
  const bool ok_cp = maps.residual_CP <= 1e-6 * (1.0 + upper.C.norm());
  const bool ok_paq = maps.residual_PAQ <= 1e-6 * (1.0 + upper.A.norm());
  if (!ok_cp || !ok_paq) {
    throw AssumptionError("interface maps infeasible: residual_CP=" + fmt(maps.residual_CP) +
                          ", residual_PAQ=" + fmt(maps.residual_PAQ));
  }
  return maps;
}

double rho_of_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw InputError("lambda must lie in (0, 1), got " + std::to_string(lambda));
  }
  return (1.0 - lambda) / (1.0 - 0.5 * lambda);
}

CertificateSdp build_sdp(const SdpInputs& in, double lambda) {
  if (in.upper == nullptr || in.lower == nullptr) {
    throw InputError("build_sdp: systems not set");
  }
  rho_of_lambda(lambda);  // range check
  const LinearSystem& s1 = *in.upper;
  const LinearSystem& s2 = *in.lower;
  const Eigen::Index n2 = s2.states();
  const Eigen::Index p = s2.outputs();
  const Mat& P = in.maps.P;
  const Mat& L1 = in.upper_est.gain;
  const Mat& L2 = in.lower_est.gain;

  // Matrices X_j whose weighted norms make up the offset alpha.
  const Mat x0 = s2.B * in.R - P * s1.B;
  const Mat xe1 = P * L1 * s1.C * mat::sym_sqrt(in.upper_est.error_cov);
  const Mat xe2 = L2 * s2.C * mat::sym_sqrt(in.lower_est.error_cov);
  const Mat xv1 = P * L1 * mat::sym_sqrt(s1.sigma_v);
  const Mat xv2 = L2 * mat::sym_sqrt(s2.sigma_v);
  const double out1 = trace_quad(s1.C, in.upper_est.error_cov);
  const double out2 = trace_quad(s2.C, in.lower_est.error_cov);
  const double trace_S = out1 + out2;
  const Vec z0 = s2.mu0 - P * s1.mu0;

  CertificateSdp sdp;
  auto& prob = sdp.problem;
  sdp.Mt = prob.add_symmetric("Mt", n2);
  sdp.Kt = prob.add_matrix("Kt", s2.inputs(), n2);
  sdp.gamma = prob.add_scalar("gamma");
  const AffineExpr& mt = sdp.Mt.expr;

  // Floor and ceiling keep both Mt and M = Mt^-1 well conditioned. Without
  // the ceiling the infimum may only be approached as Mt grows unboundedly.
  prob.require_psd(mt - AffineExpr(in.strict_eps * Mat::Identity(n2, n2)), "Mt floor");
  prob.require_psd(AffineExpr(Mat::Identity(n2, n2) / in.strict_eps) - mt, "Mt ceiling");
  {
    const AffineExpr cm = s2.C * mt;
    prob.require_psd(
        AffineExpr::block({{AffineExpr(Mat::Identity(p, p)), cm}, {cm.transpose(), mt}}),
        "output");
  }
  {
    const AffineExpr x = s2.A * mt + s2.B * sdp.Kt.expr;
    prob.require_psd(AffineExpr::block({{mt, x}, {x.transpose(), (1.0 - lambda) * mt}}),
                     "contraction");
  }
  {
    const AffineExpr head = sdp.gamma.expr - AffineExpr::scalar(trace_S);
    const AffineExpr zc{Mat(z0)};
    prob.require_psd(AffineExpr::block({{head, zc.transpose()}, {zc, mt}}), "initial");
  }
  auto weighted = [&](const Mat& x, const std::string& name) {
    const conic::Variable t = prob.add_symmetric(name, x.cols());
    const AffineExpr xc(x);
    prob.require_psd(AffineExpr::block({{t.expr, xc.transpose()}, {xc, mt}}), name);
    return t.expr.trace();
  };
  const AffineExpr tr0 = weighted(x0, "T_0");
  const AffineExpr tre1 = weighted(xe1, "T_E1");
  const AffineExpr tre2 = weighted(xe2, "T_E2");
  const AffineExpr trv1 = weighted(xv1, "T_v1");
  const AffineExpr trv2 = weighted(xv2, "T_v2");

  const double u2 = in.u_max * in.u_max;
  AffineExpr alpha_bar = (2.0 * u2 / lambda) * tr0 + tre1 + tre2 + trv1 + trv2 +
                         AffineExpr::scalar(lambda / (2.0 - lambda) * (out1 + out2));
  prob.require_psd(sdp.gamma.expr - ((2.0 - lambda) / lambda) * alpha_bar, "epigraph");
  prob.minimize(sdp.gamma.expr);
  return sdp;
}

std::pair<Mat, Mat> recover_MK(const Mat& Mt, const Mat& Kt) {
  if (Mt.rows() != Mt.cols() || Kt.cols() != Mt.rows()) {
    throw InputError("recover_MK: dimension mismatch");
  }
  Eigen::LLT<Mat> chol(mat::symmetrize(Mt));
  if (chol.info() != Eigen::Success) {
    throw NumericError("recover_MK: Mt is not positive definite");
  }
  const Mat inv = chol.solve(Mat::Identity(Mt.rows(), Mt.cols()));
  return {mat::symmetrize(inv), Kt * inv};
}

std::pair<Mat, Mat> recover_MK(const CertificateSdp& sdp, const conic::SdpSolution& sol) {
  if (sol.status != conic::SdpStatus::optimal) {
    throw NumericError("recover_MK: SDP was not solved to optimality");
  }
  return recover_MK(sol.value(sdp.Mt), sol.value(sdp.Kt));
}

ConstructiveResult synthesize_constructive(const LinearSystem& lower,
                                           const std::vector<double>& lambda_grid,
                                           std::optional<double> lambda_hint,
                                           double strict_eps) {
  if (!check_stabilizable(lower.A, lower.B)) {
    throw AssumptionError("lower system is not stabilizable");
  }
  const Eigen::Index n = lower.states();
  const Eigen::Index m = lower.inputs();
  const auto lqr = mat::solve_control_dare(lower.A, lower.B, Mat::Identity(n, n),
                                           Mat::Identity(m, m));
  const Mat k = -lqr.gain;
  const Mat ak = lower.A + lower.B * k;
  const double radius = mat::spectral_radius(ak);

  std::vector<double> candidates = lambda_hint ? std::vector<double>{*lambda_hint} : lambda_grid;
  std::optional<double> lambda;
  for (double l : candidates) {
    if (!(l > 0.0 && l < 1.0)) continue;
    if (radius / std::sqrt(1.0 - l) < 1.0 - 1e-6 && (!lambda || l > *lambda)) lambda = l;
  }
  if (!lambda) {
    throw SynthesisError("constructive certificate: no admissible lambda for closed-loop "
                         "spectral radius " + std::to_string(radius));
  }
  const Mat akl = ak / std::sqrt(1.0 - *lambda);
  const Mat ctc = lower.C.transpose() * lower.C;
  // Lambda must dominate akl' C'C akl - C'C; this choice also keeps N > 0.
  const Mat big_lambda = akl.transpose() * ctc * akl + strict_eps * Mat::Identity(n, n);
  const Mat nsol = mat::solve_discrete_lyapunov(akl, big_lambda);
  return {mat::symmetrize(nsol + ctc), k, *lambda};
}

Mat compute_R(const Mat& M, const Mat& P, const Mat& B1, const Mat& B2, bool spectral) {
  if (M.rows() != M.cols() || B2.rows() != M.rows() || P.rows() != M.rows() ||
      P.cols() != B1.rows()) {
    throw InputError("compute_R: dimension mismatch");
  }
  const Mat mh = mat::sym_sqrt(M);
  const Mat a = mh * B2;
  const Mat b = mh * P * B1;
  Mat r = mat::minnorm_lstsq(a, b);
  if (!spectral) return r;

  conic::SdpProblem prob;
  const auto rv = prob.add_matrix("R", B2.cols(), B1.cols());
  const auto t = prob.add_scalar("t");
  const AffineExpr y = a * rv.expr - AffineExpr(b);
  const Eigen::Index n = M.rows();
  const Eigen::Index m1 = B1.cols();
  const AffineExpr tn = t.expr * Mat::Ones(1, 1);
  auto scaled_eye = [&](Eigen::Index k) {
    std::map<int, Mat> terms{{t.offset, Mat::Identity(k, k)}};
    return AffineExpr(Mat::Zero(k, k), std::move(terms));
  };
  prob.require_psd(AffineExpr::block({{scaled_eye(n), y}, {y.transpose(), scaled_eye(m1)}}),
                   "spectral");
  prob.minimize(tn);
  const auto sol = conic::solve(prob);
  if (sol.status != conic::SdpStatus::optimal) return r;
  const Mat rs = sol.value(rv);
  // Keep whichever candidate is better in the spectral norm.
  if (mat::spectral_norm(a * rs - b) <= mat::spectral_norm(a * r - b)) r = rs;
  return r;
}

double certificate_margin(const LinearSystem& lower, const Mat& M, const Mat& K, double lambda) {
  const Mat ak = lower.A + lower.B * K;
  const Mat first = M - lower.C.transpose() * lower.C;
  const Mat second = (1.0 - lambda) * M - ak.transpose() * M * ak;
  return std::min(mat::min_eigenvalue(mat::symmetrize(first)),
                  mat::min_eigenvalue(mat::symmetrize(second)));
}

Certificate compute_certificate(const Architecture& arch, const InterfaceMaps& maps,
                                const Estimator& upper_est, const Estimator& lower_est,
                                const Mat& M, const Mat& K, double lambda, const Mat& R) {
  const LinearSystem& s1 = arch.upper;
  const LinearSystem& s2 = arch.lower;
  Certificate cert;
  cert.M = M;
  cert.K = K;
  cert.lambda = lambda;
  cert.rho = rho_of_lambda(lambda);
  const Mat mh = mat::sym_sqrt(M);
  const Mat& P = maps.P;
  const Mat se1 = mat::sym_sqrt(upper_est.error_cov);
  const Mat se2 = mat::sym_sqrt(lower_est.error_cov);

  const double input_term = mat::spectral_norm(mh * (s2.B * R - P * s1.B));
  const Mat e1 = P * upper_est.gain * s1.C;
  const Mat e2 = lower_est.gain * s2.C;
  const double w = lambda / (2.0 - lambda);
  double alpha = (2.0 / lambda) * input_term * input_term * arch.u_max * arch.u_max;
  alpha += (mh * e1 * se1).squaredNorm() + w * (s1.C * se1).squaredNorm();
  alpha += (mh * e2 * se2).squaredNorm() + w * (s2.C * se2).squaredNorm();
  alpha += (mh * P * upper_est.gain * mat::sym_sqrt(s1.sigma_v)).squaredNorm();
  alpha += (mh * lower_est.gain * mat::sym_sqrt(s2.sigma_v)).squaredNorm();
  cert.alpha = alpha;

  cert.trace_S = trace_quad(s1.C, upper_est.error_cov) + trace_quad(s2.C, lower_est.error_cov);
  const Vec z0 = s2.mu0 - P * s1.mu0;
  cert.V0 = z0.dot(M * z0) + cert.trace_S;
  const double noise = s1.sigma_v.trace() + s2.sigma_v.trace();
  cert.epsilon = std::sqrt(std::max(cert.V0, cert.alpha / (1.0 - cert.rho)) + noise);
  return cert;
}

double evaluate_V(const Certificate& cert, const InterfaceMaps& maps, const Vec& xhat1,
                  const Vec& xhat2) {
  if (xhat1.size() != maps.P.cols() || xhat2.size() != maps.P.rows() ||
      cert.M.rows() != xhat2.size()) {
    throw InputError("evaluate_V: dimension mismatch");
  }
  const Vec d = xhat2 - maps.P * xhat1;
  return d.dot(cert.M * d) + cert.trace_S;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

constexpr double kMarginTol = 1e-7;

struct Candidate {
  Mat R;
  Certificate cert;
};

bool better(const Candidate& a, const std::optional<Candidate>& b) {
  if (!b) return true;
  if (a.cert.epsilon != b->cert.epsilon) return a.cert.epsilon < b->cert.epsilon;
  return a.cert.lambda < b->cert.lambda;
}

struct SweepResult {
  std::optional<Candidate> best;
  std::vector<std::string> status;
};

SweepResult sweep(const Architecture& arch, const SdpInputs& base) {
  SweepResult out;
  const SynthCfg& cfg = arch.synth;
  conic::SolverOptions opts;
  opts.tol = cfg.sdp_tol;
  for (double lambda : cfg.lambda_grid) {
    std::string status;
    try {
      const CertificateSdp sdp = build_sdp(base, lambda);
      const conic::SdpSolution sol = conic::solve(sdp.problem, opts);
      status = conic::to_string(sol.status);
      if (sol.status == conic::SdpStatus::optimal) {
        auto [M, K] = recover_MK(sdp, sol);
        if (certificate_margin(arch.lower, M, K, lambda) < -kMarginTol) {
          status = "margin_violation";
        } else {
          Candidate c;
          c.R = compute_R(M, base.maps.P, arch.upper.B, arch.lower.B, cfg.spectral_R);
          c.cert = compute_certificate(arch, base.maps, base.upper_est, base.lower_est, M, K,
                                       lambda, c.R);
          if (!std::isfinite(c.cert.epsilon)) {
            status = "numeric_error";
          } else if (better(c, out.best)) {
            out.best = std::move(c);
          }
        }
      }
    } catch (const NumericError&) {
      status = "numeric_error";
    }
    out.status.push_back(status);
  }
  return out;
}

}  // namespace

InterfaceDesign design_pipeline(const Architecture& arch_in) {
  const Architecture arch = validate(arch_in);
  if (!check_stabilizable(arch.lower.A, arch.lower.B)) {
    throw AssumptionError("lower system is not stabilizable");
  }
  InterfaceDesign design;
  design.upper_est = build_estimator(arch.upper);
  design.lower_est = build_estimator(arch.lower);
  design.maps = solve_interface_maps(arch.upper, arch.lower);
  design.meta.lambda_grid_used = arch.synth.lambda_grid;

  SdpInputs in;
  in.upper = &arch.upper;
  in.lower = &arch.lower;
  in.maps = design.maps;
  in.upper_est = design.upper_est;
  in.lower_est = design.lower_est;
  in.u_max = arch.u_max;
  in.strict_eps = arch.synth.strict_eps;
  in.R = compute_R(Mat::Identity(arch.lower.states(), arch.lower.states()), design.maps.P,
                   arch.upper.B, arch.lower.B, arch.synth.spectral_R);

  std::optional<Candidate> best;
  constexpr int kMaxSweeps = 3;
  for (int s = 1; s <= kMaxSweeps; ++s) {
    SweepResult res = sweep(arch, in);
    if (!res.best) {
      if (s == 1) design.meta.sdp_status_per_lambda = res.status;
      break;
    }
    if (best && !(res.best->cert.epsilon < best->cert.epsilon)) break;
    best = res.best;
    design.meta.sdp_status_per_lambda = std::move(res.status);
    design.meta.sweeps = s;
    in.R = best->R;
  }

  if (!best) {
    if (!arch.synth.use_constructive_fallback) {
      throw SynthesisError("certificate SDP infeasible for every lambda in the grid");
    }
    const ConstructiveResult cr = synthesize_constructive(arch.lower, arch.synth.lambda_grid,
                                                          std::nullopt, arch.synth.strict_eps);
    if (certificate_margin(arch.lower, cr.M, cr.K, cr.lambda) < -kMarginTol) {
      throw SynthesisError("constructive certificate violates the matrix inequalities");
    }
    Candidate c;
    c.R = compute_R(cr.M, design.maps.P, arch.upper.B, arch.lower.B, arch.synth.spectral_R);
    c.cert = compute_certificate(arch, design.maps, design.upper_est, design.lower_est, cr.M,
                                 cr.K, cr.lambda, c.R);
    best = std::move(c);
    design.meta.fallback_used = true;
  }
  design.R = best->R;
  design.K = best->cert.K;
  design.cert = best->cert;
  return design;
}

// ---------------------------------------------------------------------------
// Artifact JSON

namespace {

using detail::json;

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError("schema: missing field " + where + key);
  return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw InputError("schema: " + where + key + " must be a number");
  return v.get<double>();
}

}  // namespace

std::string design_to_json(const InterfaceDesign& d) {
  using detail::matrix_json;
  json meta{{"lambda_grid_used", d.meta.lambda_grid_used},
            {"sdp_status_per_lambda", d.meta.sdp_status_per_lambda},
            {"fallback_used", d.meta.fallback_used},
            {"sweeps", d.meta.sweeps}};
  json root{{"P", matrix_json(d.maps.P)},
            {"Q", matrix_json(d.maps.Q)},
            {"R", matrix_json(d.R)},
            {"K", matrix_json(d.K)},
            {"M", matrix_json(d.cert.M)},
            {"lambda", d.cert.lambda},
            {"rho", d.cert.rho},
            {"alpha", d.cert.alpha},
            {"trace_S", d.cert.trace_S},
            {"epsilon", d.cert.epsilon},
            {"L1", matrix_json(d.upper_est.gain)},
            {"L2", matrix_json(d.lower_est.gain)},
            {"Sigma_e1", matrix_json(d.upper_est.error_cov)},
            {"Sigma_e2", matrix_json(d.lower_est.error_cov)},
            {"meta", std::move(meta)}};
  return root.dump(2) + "\n";
}

InterfaceDesign design_from_json(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError("design JSON parse error at " + detail::position(text, e.byte));
  }
  if (!root.is_object()) throw InputError("schema: design must be a JSON object");
  static const std::set<std::string> allowed{
      "P",       "Q",     "R",  "K",  "M",        "lambda",   "rho", "alpha",
      "trace_S", "epsilon", "L1", "L2", "Sigma_e1", "Sigma_e2", "meta"};
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (!allowed.count(it.key())) throw InputError("schema: unexpected field " + it.key());
  }
  auto matrix = [&](const char* key) {
    return detail::parse_matrix(field(root, key, ""), key);
  };
  InterfaceDesign d;
  d.maps.P = matrix("P");
  d.maps.Q = matrix("Q");
  d.R = matrix("R");
  d.K = matrix("K");
  d.cert.M = matrix("M");
  d.cert.K = d.K;
  d.cert.lambda = number(root, "lambda", "");
  d.cert.rho = number(root, "rho", "");
  d.cert.alpha = number(root, "alpha", "");
  d.cert.trace_S = number(root, "trace_S", "");
  d.cert.epsilon = number(root, "epsilon", "");
  d.upper_est.gain = matrix("L1");
  d.lower_est.gain = matrix("L2");
  d.upper_est.error_cov = matrix("Sigma_e1");
  d.lower_est.error_cov = matrix("Sigma_e2");

  const json& meta = field(root, "meta", "");
  if (!meta.is_object()) throw InputError("schema: meta must be an object");
  try {
    d.meta.lambda_grid_used = field(meta, "lambda_grid_used", "meta.").get<std::vector<double>>();
    d.meta.sdp_status_per_lambda =
        field(meta, "sdp_status_per_lambda", "meta.").get<std::vector<std::string>>();
    d.meta.fallback_used = field(meta, "fallback_used", "meta.").get<bool>();
    if (meta.contains("sweeps")) d.meta.sweeps = meta.at("sweeps").get<int>();
  } catch (const json::type_error&) {
    throw InputError("schema: meta has a field of the wrong type");
  }
  return d;
}

}  // namespace layersynth
