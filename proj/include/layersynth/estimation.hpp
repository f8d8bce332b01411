#pragma once

#include "layersynth/mat_core.hpp"
#include "layersynth/system_model.hpp"

namespace layersynth {

// Constant-gain (steady-state) Kalman predictor
//   xhat_{t+1} = A xhat_t + B u_t + L (y_t - C xhat_t).
// This is the linear specialization of the generic observer; the
// time-varying recursion is not needed because the initial state covariance
// equals the steady-state error covariance.
struct Estimator {
  Mat gain;       // L, n x p
  Mat error_cov;  // Sigma_e, n x n
};

// Solves the filter Riccati equation for `sys`. A system with both noise
// covariances identically zero yields Sigma_e = 0 and L = 0.
// Throws NumericError when the Riccati iteration fails (system not detectable
// or ill-conditioned).
Estimator build_estimator(const LinearSystem& sys);

Vec innovation(const LinearSystem& sys, const Vec& xhat, const Vec& y);

Vec estimate_step(const LinearSystem& sys, const Estimator& est, const Vec& xhat,
                  const Vec& u, const Vec& y);

}  // namespace layersynth
