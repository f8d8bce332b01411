#include "layersynth/estimation.hpp"

#include <string>

#include "layersynth/errors.hpp"

namespace layersynth {

Estimator build_estimator(const LinearSystem& sys) {
  const bool noiseless = (sys.sigma_w.size() == 0 || sys.sigma_w.isZero(0.0)) &&
                         (sys.sigma_v.size() == 0 || sys.sigma_v.isZero(0.0));
  if (noiseless) {
    if (mat::spectral_radius(sys.A) >= 1.0) {
      throw NumericError(
          "build_estimator: noiseless system with unstable A has no stabilizing zero gain");
    }
    return {Mat::Zero(sys.states(), sys.outputs()), Mat::Zero(sys.states(), sys.states())};
  }
  try {
    auto res = mat::solve_filter_dare(sys.A, sys.C, sys.sigma_w, sys.sigma_v);
    return {std::move(res.gain), std::move(res.error_cov)};
  } catch (const NumericError& e) {
    throw NumericError(std::string("system not detectable or ill-conditioned: ") + e.what());
  }
}

Vec innovation(const LinearSystem& sys, const Vec& xhat, const Vec& y) {
  if (xhat.size() != sys.states() || y.size() != sys.outputs()) {
    throw InputError("innovation: dimension mismatch");
  }
  return y - sys.C * xhat;
}

Vec estimate_step(const LinearSystem& sys, const Estimator& est, const Vec& xhat,
                  const Vec& u, const Vec& y) {
  if (u.size() != sys.inputs() || est.gain.rows() != sys.states() ||
      est.gain.cols() != sys.outputs()) {
    throw InputError("estimate_step: dimension mismatch");
  }
  return sys.A * xhat + sys.B * u + est.gain * innovation(sys, xhat, y);
}

}  // namespace layersynth
