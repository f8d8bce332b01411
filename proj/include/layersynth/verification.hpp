#pragma once

#include <string>
#include <vector>

#include "layersynth/synthesis.hpp"
#include "layersynth/system_model.hpp"

namespace layersynth {

struct CheckItem {
  std::string name;
  double value = 0.0;      // measured quantity
  double threshold = 0.0;  // pass boundary
  bool passed = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckItem> items;

  bool all_passed() const;
  const CheckItem* find(const std::string& name) const;
};

struct CheckTolerances {
  double lmi_margin = 1e-7;
  double interface_residual = 1e-6;  // scaled by 1 + ||C1||_F resp. 1 + ||A1||_F
  double dare_residual = 1e-8;       // scaled by 1 + ||Sigma_e||_F
  double self_consistency = 1e-9;    // relative
};

// Re-verifies a design artifact against its architecture without reusing the
// synthesis code: LMI margins at (M, K, lambda), interface-map residuals,
// estimator Riccati residuals and gain formulas, the rho/lambda relation and
// the recomputed alpha, trace term and epsilon. Throws InputError when the
// design dimensions do not match the architecture.
CheckReport verify_design(const Architecture& arch, const InterfaceDesign& design,
                          const CheckTolerances& tol = {});

}  // namespace layersynth
