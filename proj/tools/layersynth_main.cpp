#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "layersynth/cli.hpp"
#include "layersynth/errors.hpp"

namespace cli = layersynth::cli;

namespace {

struct RawOverrides {
  std::optional<std::size_t> trials;
  std::optional<std::size_t> horizon;
  std::optional<std::uint64_t> seed;
  std::string lambda_grid;
  bool spectral_R = false;
};

void add_sim_flags(CLI::App* cmd, RawOverrides& raw) {
  cmd->add_option("--trials", raw.trials, "Number of Monte Carlo trials")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--horizon", raw.horizon, "Simulation horizon T")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", raw.seed, "Master seed");
}

void add_synth_flags(CLI::App* cmd, RawOverrides& raw) {
  cmd->add_option("--lambda-grid", raw.lambda_grid, "Comma-separated lambda values in (0,1)");
  cmd->add_flag("--spectral-R", raw.spectral_R, "Minimize the exact spectral norm for R");
}

cli::Overrides resolve(const RawOverrides& raw) {
  cli::Overrides o;
  o.trials = raw.trials;
  o.horizon = raw.horizon;
  o.seed = raw.seed;
  if (!raw.lambda_grid.empty()) o.lambda_grid = cli::parse_lambda_grid(raw.lambda_grid);
  o.spectral_R = raw.spectral_R;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interface-controller synthesis and Monte Carlo validation for layered stochastic "
               "linear systems"};
  app.require_subcommand(1);
  RawOverrides raw;
  std::string config, out, design, traces, name;

  auto* synth = app.add_subcommand("synth", "Synthesize a design and its distance bound");
  synth->add_option("--config", config, "Architecture JSON")->required();
  synth->add_option("--out", out, "Design JSON to write")->required();
  add_synth_flags(synth, raw);

  auto* sim = app.add_subcommand("sim", "Validate a design by Monte Carlo simulation");
  sim->add_option("--config", config, "Architecture JSON")->required();
  sim->add_option("--design", design, "Design JSON")->required();
  sim->add_option("--out", out, "Summary CSV to write")->required();
  sim->add_option("--traces", traces, "Directory for the per-trial CSV");
  add_sim_flags(sim, raw);

  auto* check = app.add_subcommand("check", "Re-verify a design against its architecture");
  check->add_option("--design", design, "Design JSON")->required();
  check->add_option("--config", config, "Architecture JSON")->required();

  auto* kase = app.add_subcommand("case", "Run a bundled case study end to end");
  kase->add_option("name", name, "uav or hexacopter")->required();
  kase->add_option("--out", out, "Output directory")->default_val("out");
  add_sim_flags(kase, raw);
  add_synth_flags(kase, raw);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInputError;
  }

  cli::Overrides o;
  try {
    o = resolve(raw);
  } catch (const layersynth::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInputError;
  }

  cli::CommandResult r;
  if (*synth) {
    r = cli::cmd_synth(config, out, o, std::cout, std::cerr);
  } else if (*sim) {
    r = cli::cmd_sim(config, design, out, traces, o, std::cout, std::cerr);
  } else if (*check) {
    r = cli::cmd_check(design, config, std::cout, std::cerr);
  } else {
    r = cli::cmd_case(name, out, o, std::cout, std::cerr);
  }
  for (const auto& path : r.artifacts_written) std::cerr << "wrote " << path << "\n";
  return r.exit_code;
}
