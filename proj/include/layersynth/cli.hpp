#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "layersynth/system_model.hpp"

namespace layersynth::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kAssumptionError = 3,
  kSynthesisError = 4,
  kEmpiricalError = 5,
  kVerificationError = 6,
};

struct CommandResult {
  int exit_code = kOk;
  std::vector<std::string> artifacts_written;
  std::string summary_line;
};

// Command-line overrides applied on top of a configuration.
struct Overrides {
  std::optional<std::size_t> trials;
  std::optional<std::size_t> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> lambda_grid;
  bool spectral_R = false;
  // Simulation worker threads; 0 uses LAYERSYNTH_THREADS or the hardware.
  unsigned threads = 0;
};

// Parses "a,b,c" into a strictly increasing list of values in (0, 1).
// Throws InputError otherwise.
std::vector<double> parse_lambda_grid(const std::string& text);

// Applies the overrides and re-validates.
Architecture apply_overrides(Architecture arch, const Overrides& o);

// Every command prints its progress and a final summary line to `out` and
// error diagnostics to `err`; failures are reported through the exit code.

// Synthesizes a design and writes the design JSON to out_path.
CommandResult cmd_synth(const std::string& config_path, const std::string& out_path,
                        const Overrides& o, std::ostream& out, std::ostream& err);

// Monte Carlo validation of a design; writes the summary CSV to out_csv and,
// when traces_dir is non-empty, the per-trial CSV of every trial to
// traces_dir/trials.csv. Exit 5 when max_t (mean_dist - ci95) exceeds epsilon.
CommandResult cmd_sim(const std::string& config_path, const std::string& design_path,
                      const std::string& out_csv, const std::string& traces_dir,
                      const Overrides& o, std::ostream& out, std::ostream& err);

// Independent re-verification of a design artifact. Exit 6 on any failure.
CommandResult cmd_check(const std::string& design_path, const std::string& config_path,
                        std::ostream& out, std::ostream& err);

// Bundled case study end to end: writes design.json, summary.csv,
// trials.csv (first 20 trials) and plot.csv into out_dir.
CommandResult cmd_case(const std::string& name, const std::string& out_dir, const Overrides& o,
                       std::ostream& out, std::ostream& err);

}  // namespace layersynth::cli
