#include "layersynth/mat_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "layersynth/errors.hpp"

namespace layersynth::mat {

bool all_finite(const Mat& a) { return a.allFinite(); }

bool is_symmetric(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

double min_eigenvalue(const Mat& s) {
  if (s.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

void require_psd(const Mat& s, const char* what, double tol) {
  if (s.rows() != s.cols()) {
    throw InputError(std::string(what) + " must be square");
  }
  if (!s.allFinite()) {
    throw InputError(std::string(what) + " has non-finite entries");
  }
  if (!is_symmetric(s, tol)) {
    throw InputError(std::string(what) + " is not symmetric");
  }
  const double scale = 1.0 + s.cwiseAbs().maxCoeff();
  if (min_eigenvalue(s) < -tol * scale) {
    throw InputError(std::string(what) + " is not positive semidefinite");
  }
}

Mat sym_sqrt(const Mat& s, double tol) {
  require_psd(s, "sym_sqrt argument", tol);
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s));
  Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat x = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return symmetrize(x);
}

double spectral_radius(const Mat& a) {
  if (a.rows() != a.cols()) {
    throw InputError("spectral_radius: matrix must be square");
  }
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(a, false);
  if (es.info() != Eigen::Success) {
    throw NumericError("spectral_radius: eigenvalue iteration failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

Mat solve_discrete_lyapunov(const Mat& f, const Mat& qc) {
  const Eigen::Index n = f.rows();
  if (f.cols() != n || qc.rows() != n || qc.cols() != n) {
    throw InputError("solve_discrete_lyapunov: dimension mismatch");
  }
  if (spectral_radius(f) >= 1.0 - 1e-9) {
    throw NumericError("solve_discrete_lyapunov: F is not Schur stable");
  }
  const Mat ft = f.transpose();
  const Mat lhs = Mat::Identity(n * n, n * n) - kron(ft, ft);
  const Vec rhs = vec(qc);
  const Vec sol = lhs.partialPivLu().solve(rhs);
  Mat nsol = symmetrize(unvec(sol, n, n));
  const double res = (f.transpose() * nsol * f - nsol + qc).norm();
  if (!nsol.allFinite() || res > 1e-9 * (1.0 + qc.norm())) {
    throw NumericError("solve_discrete_lyapunov: residual too large");
  }
  return nsol;
}

namespace {

void check_filter_dims(const Mat& a, const Mat& c, const Mat& w, const Mat& v) {
  const Eigen::Index n = a.rows();
  const Eigen::Index p = c.rows();
  if (a.cols() != n || c.cols() != n || w.rows() != n || w.cols() != n ||
      v.rows() != p || v.cols() != p) {
    throw InputError("solve_filter_dare: dimension mismatch");
  }
}

Mat kalman_gain(const Mat& a, const Mat& c, const Mat& v, const Mat& s) {
  const Mat innov = symmetrize(c * s * c.transpose() + v);
  // L = A S C' innov^-1  <=>  innov L' = C S A'
  return innov.ldlt().solve(c * s * a.transpose()).transpose();
}

}  // namespace

double filter_dare_residual(const Mat& a, const Mat& c, const Mat& w,
                            const Mat& v, const Mat& s, const Mat& l) {
  const Mat acl = a - l * c;
  const Mat rhs = acl * s * acl.transpose() + w + l * v * l.transpose();
  return (s - rhs).norm();
}

FilterDareResult solve_filter_dare(const Mat& a, const Mat& c, const Mat& w,
                                   const Mat& v,
                                   const FilterDareOptions& opts) {
  check_filter_dims(a, c, w, v);
  Eigen::LLT<Mat> vchol(symmetrize(v));
  if (v.rows() > 0 && (vchol.info() != Eigen::Success || min_eigenvalue(v) <= 0.0)) {
    throw NumericError("solve_filter_dare: measurement covariance is singular");
  }
  Mat s = symmetrize(w);
  for (int k = 1; k <= opts.max_iters; ++k) {
    const Mat innov = symmetrize(c * s * c.transpose() + v);
    const Mat csa = c * s * a.transpose();
    Mat next = a * s * a.transpose() + w - csa.transpose() * innov.ldlt().solve(csa);
    next = symmetrize(next);
    if (!next.allFinite()) break;
    const double step = (next - s).norm();
    const double scale = 1.0 + s.norm();
    s = std::move(next);
    if (step <= opts.tol * scale) {
      FilterDareResult out;
      out.error_cov = s;
      out.gain = kalman_gain(a, c, v, s);
      out.iterations = k;
      if (spectral_radius(a - out.gain * c) >= 1.0) {
        throw NumericError(
            "solve_filter_dare: A - L C is not Schur stable (system not detectable)");
      }
      return out;
    }
  }
  throw NumericError(
      "solve_filter_dare: Riccati iteration did not converge (system not "
      "detectable or ill-conditioned)");
}

double control_dare_residual(const Mat& a, const Mat& b, const Mat& q,
                             const Mat& r, const Mat& x) {
  const Mat bxa = b.transpose() * x * a;
  const Mat rhs = a.transpose() * x * a + q -
                  bxa.transpose() * symmetrize(b.transpose() * x * b + r).ldlt().solve(bxa);
  return (x - rhs).norm();
}

ControlDareResult solve_control_dare(const Mat& a, const Mat& b, const Mat& q,
                                     const Mat& r,
                                     const FilterDareOptions& opts) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != m || r.cols() != m) {
    throw InputError("solve_control_dare: dimension mismatch");
  }
  if (m > 0 && min_eigenvalue(r) <= 0.0) {
    throw InputError("solve_control_dare: input penalty must be positive definite");
  }
  Mat x = symmetrize(q);
  for (int k = 1; k <= opts.max_iters; ++k) {
    const Mat bxa = b.transpose() * x * a;
    const Mat gram = symmetrize(b.transpose() * x * b + r);
    Mat next = a.transpose() * x * a + q - bxa.transpose() * gram.ldlt().solve(bxa);
    next = symmetrize(next);
    if (!next.allFinite()) break;
    const double step = (next - x).norm();
    const double scale = 1.0 + x.norm();
    x = std::move(next);
    if (step <= opts.tol * scale) {
      ControlDareResult out;
      out.cost = x;
      out.gain = symmetrize(b.transpose() * x * b + r).ldlt().solve(b.transpose() * x * a);
      out.iterations = k;
      if (spectral_radius(a - b * out.gain) >= 1.0) {
        throw NumericError("solve_control_dare: closed loop is not Schur stable");
      }
      return out;
    }
  }
  throw NumericError(
      "solve_control_dare: Riccati iteration did not converge (pair not stabilizable?)");
}

Mat minnorm_lstsq(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw InputError("minnorm_lstsq: row mismatch");
  }
  if (a.size() == 0) return Mat::Zero(a.cols(), b.cols());
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
  Vec inv = Vec::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * b);
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vec vec(const Mat& a) { return Eigen::Map<const Vec>(a.data(), a.size()); }

Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw InputError("unvec: size mismatch");
  }
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace layersynth::mat
