#pragma once

#include <stdexcept>
#include <string>

namespace layersynth {

// Bad input data: malformed config, dimension mismatch, non-PSD covariance.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The pair of systems violates the interface-map equations C2 P = C1,
// P A1 = A2 P + B2 Q, or the lower system is not stabilizable.
class AssumptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical routine did not converge or produced an invalid result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No (M, K, lambda) certificate could be produced.
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace layersynth
