#include "layersynth/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "layersynth/errors.hpp"

namespace layersynth {

bool CheckReport::all_passed() const {
  return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return i.passed; });
}

const CheckItem* CheckReport::find(const std::string& name) const {
  for (const auto& item : items) {
    if (item.name == name) return &item;
  }
  return nullptr;
}

namespace {

// Smallest eigenvalue of the symmetric part.
double lowest_eigenvalue(const Mat& a) {
  const Mat s = 0.5 * (a + a.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(s, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

double highest_eigenvalue(const Mat& a) {
  const Mat s = 0.5 * (a + a.transpose());
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(s, Eigen::EigenvaluesOnly).eigenvalues();
  return ev(ev.size() - 1);
}

// tr(E' M E S) = ||M^1/2 E S^1/2||_F^2 without forming square roots.
double weighted_trace(const Mat& m, const Mat& e, const Mat& s) {
  return (e.transpose() * m * e * s).trace();
}

// Predictor Riccati residual in the plain (non-Joseph) form:
//   A S A' + W - A S C' (C S C' + V)^-1 C S A' - S.
double riccati_residual(const LinearSystem& sys, const Mat& s) {
  const Mat innov = sys.C * s * sys.C.transpose() + sys.sigma_v;
  const Mat cross = sys.A * s * sys.C.transpose();
  const Mat correction = cross * innov.ldlt().solve(cross.transpose());
  return (sys.A * s * sys.A.transpose() + sys.sigma_w - correction - s).norm();
}

Mat predictor_gain(const LinearSystem& sys, const Mat& s) {
  const Mat innov = sys.C * s * sys.C.transpose() + sys.sigma_v;
  const Mat cross = sys.A * s * sys.C.transpose();
  return innov.ldlt().solve(cross.transpose()).transpose();
}

std::string describe(double value, const char* relation, double threshold) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6e %s %.6e", value, relation, threshold);
  return buf;
}

void add_upper_bound(CheckReport& r, std::string name, double value, double threshold) {
  r.items.push_back({std::move(name), value, threshold,
                     std::isfinite(value) && value <= threshold,
                     describe(value, "<=", threshold)});
}

void add_lower_bound(CheckReport& r, std::string name, double value, double threshold) {
  r.items.push_back({std::move(name), value, threshold,
                     std::isfinite(value) && value >= threshold,
                     describe(value, ">=", threshold)});
}

double relative_gap(double stored, double recomputed) {
  return std::abs(stored - recomputed) / std::max(1.0, std::abs(recomputed));
}

void require_shape(const Mat& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    throw InputError(std::string("design does not match the architecture: ") + what + " is " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

CheckReport verify_design(const Architecture& arch, const InterfaceDesign& d,
                          const CheckTolerances& tol) {
  const LinearSystem& s1 = arch.upper;
  const LinearSystem& s2 = arch.lower;
  const auto n1 = s1.states(), n2 = s2.states();
  const auto m1 = s1.inputs(), m2 = s2.inputs();
  require_shape(d.maps.P, n2, n1, "P");
  require_shape(d.maps.Q, m2, n1, "Q");
  require_shape(d.R, m2, m1, "R");
  require_shape(d.K, m2, n2, "K");
  require_shape(d.cert.M, n2, n2, "M");
  require_shape(d.upper_est.gain, n1, s1.outputs(), "L1");
  require_shape(d.lower_est.gain, n2, s2.outputs(), "L2");
  require_shape(d.upper_est.error_cov, n1, n1, "Sigma_e1");
  require_shape(d.lower_est.error_cov, n2, n2, "Sigma_e2");

  CheckReport r;
  const double lambda = d.cert.lambda;
  const Mat& M = d.cert.M;
  const Mat& P = d.maps.P;

  // Contraction rate.
  const bool lambda_ok = std::isfinite(lambda) && lambda > 0.0 && lambda < 1.0;
  r.items.push_back({"lambda_range", lambda, 1.0, lambda_ok,
                     lambda_ok ? "0 < lambda < 1" : "lambda outside (0, 1)"});
  const double rho_expected = (1.0 - lambda) / (1.0 - 0.5 * lambda);
  const bool rho_ok = std::isfinite(d.cert.rho) && d.cert.rho > 0.0 && d.cert.rho < 1.0 &&
                      relative_gap(d.cert.rho, rho_expected) <= tol.self_consistency;
  r.items.push_back({"rho", d.cert.rho, rho_expected, rho_ok,
                     rho_ok ? "rho in (0, 1) and consistent with lambda"
                            : "rho outside (0, 1) or inconsistent with lambda"});
  add_lower_bound(r, "alpha_positive", d.cert.alpha, 0.0);
  r.items.back().passed = r.items.back().passed && d.cert.alpha > 0.0;

  // Matrix inequalities at (M, K, lambda).
  add_lower_bound(r, "M_positive_definite", lowest_eigenvalue(M), 0.0);
  r.items.back().passed = r.items.back().passed && r.items.back().value > 0.0;
  add_lower_bound(r, "lmi_output", lowest_eigenvalue(M - s2.C.transpose() * s2.C),
                  -tol.lmi_margin);
  const Mat closed = s2.A + s2.B * d.K;
  add_lower_bound(r, "lmi_contraction",
                  lowest_eigenvalue((1.0 - lambda) * M - closed.transpose() * M * closed),
                  -tol.lmi_margin);

  // Interface maps.
  add_upper_bound(r, "residual_CP", (s2.C * P - s1.C).norm(),
                  tol.interface_residual * (1.0 + s1.C.norm()));
  add_upper_bound(r, "residual_PAQ", (P * s1.A - s2.A * P - s2.B * d.maps.Q).norm(),
                  tol.interface_residual * (1.0 + s1.A.norm()));

  // Estimators.
  const Mat& se1 = d.upper_est.error_cov;
  const Mat& se2 = d.lower_est.error_cov;
  add_upper_bound(r, "dare_upper", riccati_residual(s1, se1),
                  tol.dare_residual * (1.0 + se1.norm()));
  add_upper_bound(r, "dare_lower", riccati_residual(s2, se2),
                  tol.dare_residual * (1.0 + se2.norm()));
  add_upper_bound(r, "gain_upper", (d.upper_est.gain - predictor_gain(s1, se1)).norm(),
                  tol.dare_residual * (1.0 + d.upper_est.gain.norm()));
  add_upper_bound(r, "gain_lower", (d.lower_est.gain - predictor_gain(s2, se2)).norm(),
                  tol.dare_residual * (1.0 + d.lower_est.gain.norm()));

  // Certificate scalars recomputed from the stored matrices.
  const Mat& l1 = d.upper_est.gain;
  const Mat& l2 = d.lower_est.gain;
  const Mat mismatch = s2.B * d.R - P * s1.B;
  const double input_sq = std::max(0.0, highest_eigenvalue(mismatch.transpose() * M * mismatch));
  const double w = lambda / (2.0 - lambda);
  double alpha = 2.0 * input_sq * arch.u_max * arch.u_max / lambda;
  alpha += weighted_trace(M, P * l1 * s1.C, se1) + w * (s1.C * se1 * s1.C.transpose()).trace();
  alpha += weighted_trace(M, l2 * s2.C, se2) + w * (s2.C * se2 * s2.C.transpose()).trace();
  alpha += weighted_trace(M, P * l1, s1.sigma_v) + weighted_trace(M, l2, s2.sigma_v);
  const double trace_s = (s1.C * se1 * s1.C.transpose()).trace() +
                         (s2.C * se2 * s2.C.transpose()).trace();
  const Vec z0 = s2.mu0 - P * s1.mu0;
  const double v0 = z0.dot(M * z0) + trace_s;
  const double steady = alpha * (2.0 - lambda) / lambda;  // alpha / (1 - rho)
  const double epsilon =
      std::sqrt(std::max(v0, steady) + s1.sigma_v.trace() + s2.sigma_v.trace());

  add_upper_bound(r, "alpha_consistency", relative_gap(d.cert.alpha, alpha), tol.self_consistency);
  add_upper_bound(r, "trace_S_consistency", relative_gap(d.cert.trace_S, trace_s),
                  tol.self_consistency);
  add_upper_bound(r, "epsilon_consistency", relative_gap(d.cert.epsilon, epsilon),
                  tol.self_consistency);
  return r;
}

}  // namespace layersynth
