#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <vector>

#include "layersynth/mat_core.hpp"
#include "layersynth/synthesis.hpp"
#include "layersynth/system_model.hpp"

namespace layersynth {

// Philox4x32-10 counter-based generator: a pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Independent noise substreams of one trial.
enum class Stream : std::uint32_t {
  upper_initial = 0,
  lower_initial = 1,
  upper_process = 2,
  upper_measurement = 3,
  lower_process = 4,
  lower_measurement = 5,
};

// `dim` standard normal samples for (seed, trial, stream, t); the same
// arguments always give the same numbers.
Vec standard_normals(std::uint64_t seed, std::uint64_t trial, Stream stream, std::uint32_t t,
                     Eigen::Index dim);

// K_lqr = (B'XB + P_R)^-1 B'XA with X solving the control Riccati equation;
// the upper input is u1 = -K_lqr xhat1 before saturation.
Mat lqg_gain(const LinearSystem& upper, const UpperControllerCfg& cfg);

// Radial projection onto the Euclidean ball of radius u_max.
Vec saturate(const Vec& u, double u_max);

// u2 = R u1 + Q xhat1 + K (xhat2 - P xhat1).
Vec interface_control(const InterfaceDesign& design, const Vec& u1, const Vec& xhat1,
                      const Vec& xhat2);

// Entries are indexed by t = 0..T.
struct TrialTrace {
  std::vector<Vec> x1, xhat1, y1, u1;
  std::vector<Vec> x2, xhat2, y2, u2;
  std::vector<double> dist;  // ||y1 - y2||
  std::vector<double> V;     // simulation function at (xhat1, xhat2)
};

TrialTrace simulate_trial(const Architecture& arch, const InterfaceDesign& design,
                          std::uint64_t trial, std::uint64_t master_seed);

struct McSummary {
  std::vector<double> mean_dist;
  std::vector<double> std_dist;
  std::vector<double> ci95;  // 1.96 std / sqrt(trials)
  std::vector<double> mean_V;
  std::vector<double> std_V;
  std::vector<double> mean_norm_y1;
  std::vector<double> mean_norm_y2;
  // ||C1 x1 - C2 x2||^2 (noise-free output gap): mean and standard deviation.
  std::vector<double> mean_gap_sq;
  std::vector<double> std_gap_sq;
  double epsilon = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double max_mean_dist = 0.0;
};

struct McOptions {
  // Number of leading trials whose full traces are returned.
  std::size_t retain_traces = 0;
  // Worker threads; 0 reads LAYERSYNTH_THREADS, falling back to the hardware
  // concurrency. Results do not depend on this value.
  unsigned threads = 0;
};

struct McResult {
  McSummary summary;
  std::vector<TrialTrace> traces;
};

// Runs arch.sim.trials trials of length arch.sim.horizon with seed
// arch.sim.seed. Throws NumericError if a trial produces non-finite values.
McResult monte_carlo(const Architecture& arch, const InterfaceDesign& design,
                     const McOptions& opts = {});

struct ContractionReport {
  // mean_V[t+1] - (rho mean_V[t] + alpha), t = 0..T-1
  std::vector<double> step_slack;
  // mean_V[t] - (rho^t V0 + alpha (1 - rho^t) / (1 - rho)), t = 0..T
  std::vector<double> recursion_slack;
  std::vector<double> standard_error;  // of mean_V[t]
  std::vector<bool> step_flagged;      // step_slack > 3 SE of mean_V[t+1]
  std::vector<bool> recursion_flagged; // recursion_slack > 3 SE of mean_V[t]
  std::size_t violations = 0;
};

ContractionReport contraction_report(const McSummary& summary, const Certificate& cert);

// One row per t: t, mean_dist, std_dist, ci95, mean_V, epsilon.
void write_summary_csv(std::ostream& os, const McSummary& summary);
// One row per (trial, t): trial, t, dist, V, norm_y1, norm_y2.
void write_trials_csv(std::ostream& os, const std::vector<TrialTrace>& traces);
// Plot data: t, mean_dist, epsilon.
void write_plot_csv(std::ostream& os, const McSummary& summary);

// Worker count from LAYERSYNTH_THREADS (positive integer) or the hardware.
unsigned default_thread_count();

}  // namespace layersynth
