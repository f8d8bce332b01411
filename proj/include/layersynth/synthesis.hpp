#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "layersynth/conic.hpp"
#include "layersynth/estimation.hpp"
#include "layersynth/mat_core.hpp"
#include "layersynth/system_model.hpp"

namespace layersynth {

// Linear maps embedding the upper state space into the lower one:
//   C2 P = C1,   P A1 = A2 P + B2 Q.
struct InterfaceMaps {
  Mat P;  // n2 x n1
  Mat Q;  // m2 x n1
  double residual_CP = 0.0;
  double residual_PAQ = 0.0;
};

// Minimum-norm solution of the stacked linear system. Throws AssumptionError
// ("interface maps infeasible", both residuals reported) when no exact solution
// exists.
InterfaceMaps solve_interface_maps(const LinearSystem& upper, const LinearSystem& lower);

// Contraction certificate for the simulation function
//   V(xh1, xh2) = (xh2 - P xh1)' M (xh2 - P xh1) + trace_S.
struct Certificate {
  Mat M;
  Mat K;
  double lambda = 0.0;
  double rho = 0.0;
  double alpha = 0.0;
  double trace_S = 0.0;
  double epsilon = 0.0;
  double V0 = 0.0;  // V at the initial means
};

struct DesignMeta {
  std::vector<double> lambda_grid_used;
  std::vector<std::string> sdp_status_per_lambda;  // status of the final sweep
  bool fallback_used = false;
  int sweeps = 0;
};

struct InterfaceDesign {
  InterfaceMaps maps;
  Mat R;  // m2 x m1
  Mat K;  // m2 x n2
  Certificate cert;
  Estimator upper_est;
  Estimator lower_est;
  DesignMeta meta;
};

// rho = (1 - lambda) / (1 - lambda / 2). Throws InputError unless 0 < lambda < 1.
double rho_of_lambda(double lambda);

// Everything the certificate SDP needs besides lambda.
struct SdpInputs {
  const LinearSystem* upper = nullptr;
  const LinearSystem* lower = nullptr;
  InterfaceMaps maps;
  Estimator upper_est;
  Estimator lower_est;
  Mat R;
  double u_max = 1.0;
  double strict_eps = 1e-6;
};

struct CertificateSdp {
  conic::SdpProblem problem;
  conic::Variable Mt;  // inverse of M
  conic::Variable Kt;  // K times Mt
  conic::Variable gamma;
};

// Convex program in (Mt, Kt, gamma, T_0, T_E1, T_E2, T_v1, T_v2) whose optimal
// gamma upper-bounds eps^2 - trace(Sigma_v1 + Sigma_v2) at the given lambda.
CertificateSdp build_sdp(const SdpInputs& in, double lambda);

// M = Mt^-1 (symmetrized), K = Kt Mt^-1.
std::pair<Mat, Mat> recover_MK(const Mat& Mt, const Mat& Kt);
std::pair<Mat, Mat> recover_MK(const CertificateSdp& sdp, const conic::SdpSolution& sol);

struct ConstructiveResult {
  Mat M;
  Mat K;
  double lambda = 0.0;
};

// Certificate from a stabilizing LQR gain and a discrete Lyapunov equation.
// The contraction rate is the largest entry of `lambda_grid` (or `lambda_hint`
// when given) compatible with the closed-loop spectral radius. Throws
// AssumptionError when the lower system is not stabilizable and
// SynthesisError when no admissible lambda exists.
ConstructiveResult synthesize_constructive(const LinearSystem& lower,
                                           const std::vector<double>& lambda_grid,
                                           std::optional<double> lambda_hint = std::nullopt,
                                           double strict_eps = 1e-6);

// Feed-through R minimizing ||M^1/2 (B2 R - P B1)||: Frobenius norm in closed
// form by default, spectral norm via a small SDP when `spectral` is set.
Mat compute_R(const Mat& M, const Mat& P, const Mat& B1, const Mat& B2, bool spectral = false);

// The certificate matrix inequalities at (M, K, lambda):
//   M - C2'C2 >= 0   and   M - lambda M - (A2 + B2 K)' M (A2 + B2 K) >= 0.
// Returns the smaller of the two minimum eigenvalues.
double certificate_margin(const LinearSystem& lower, const Mat& M, const Mat& K, double lambda);

Certificate compute_certificate(const Architecture& arch, const InterfaceMaps& maps,
                                const Estimator& upper_est, const Estimator& lower_est,
                                const Mat& M, const Mat& K, double lambda, const Mat& R);

double evaluate_V(const Certificate& cert, const InterfaceMaps& maps, const Vec& xhat1,
                  const Vec& xhat2);

// Estimators, interface maps, lambda search over the certificate SDP (with
// up to three R/M sweeps) and the constructive fallback. Deterministic.
InterfaceDesign design_pipeline(const Architecture& arch);

// Design artifact JSON (matrices as arrays of rows, full double precision).
std::string design_to_json(const InterfaceDesign& design);
// Throws InputError on malformed artifacts. Certificate scalars are read back
// as stored; V0 is left at zero.
InterfaceDesign design_from_json(std::string_view text);

}  // namespace layersynth
