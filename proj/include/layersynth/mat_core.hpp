#pragma once

#include <Eigen/Dense>

namespace layersynth {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace mat {

// Default tolerance used to decide symmetry / positive semidefiniteness.
inline constexpr double kPsdTol = 1e-9;

bool all_finite(const Mat& a);
bool is_symmetric(const Mat& a, double tol = kPsdTol);

// Smallest eigenvalue of the symmetric part of a square matrix.
double min_eigenvalue(const Mat& s);

// Throws InputError unless `s` is symmetric within `tol` (relative to its
// magnitude) and its smallest eigenvalue is at least -tol.
void require_psd(const Mat& s, const char* what, double tol = kPsdTol);

Mat symmetrize(const Mat& a);

// Principal square root of a symmetric PSD matrix. Eigenvalues slightly below
// zero (within tol) are clamped.
Mat sym_sqrt(const Mat& s, double tol = kPsdTol);

double spectral_radius(const Mat& a);

// Largest singular value.
double spectral_norm(const Mat& a);

// Solves F' N F - N = -Qc for N. F must be Schur stable.
Mat solve_discrete_lyapunov(const Mat& f, const Mat& qc);

struct FilterDareOptions {
  double tol = 1e-12;
  int max_iters = 100000;
};

struct FilterDareResult {
  Mat error_cov;  // steady-state prediction error covariance
  Mat gain;       // L = A S C' (C S C' + V)^-1
  int iterations = 0;
};

// Steady-state Kalman predictor Riccati equation
//   S = (A - L C) S (A - L C)' + W + L V L'.
FilterDareResult solve_filter_dare(const Mat& a, const Mat& c, const Mat& w,
                                   const Mat& v,
                                   const FilterDareOptions& opts = {});

// Frobenius norm of the Riccati residual at (S, L) in Joseph form.
double filter_dare_residual(const Mat& a, const Mat& c, const Mat& w,
                            const Mat& v, const Mat& s, const Mat& l);

struct ControlDareResult {
  Mat cost;  // X
  Mat gain;  // (B' X B + R)^-1 B' X A, applied as u = -gain * x
  int iterations = 0;
};

// Control Riccati equation X = A'XA - A'XB(B'XB + R)^-1 B'XA + Q, solved by
// fixed-point iteration from X = Q.
ControlDareResult solve_control_dare(const Mat& a, const Mat& b, const Mat& q,
                                     const Mat& r,
                                     const FilterDareOptions& opts = {});

double control_dare_residual(const Mat& a, const Mat& b, const Mat& q,
                             const Mat& r, const Mat& x);

// argmin ||A X - B||_F of minimum Frobenius norm. Singular values below
// 1e-10 * sigma_max are treated as zero.
Mat minnorm_lstsq(const Mat& a, const Mat& b);

Mat kron(const Mat& a, const Mat& b);

// Column-major vectorization and its inverse.
Vec vec(const Mat& a);
Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace mat
}  // namespace layersynth
