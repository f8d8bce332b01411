#include "layersynth/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "layersynth/errors.hpp"
#include "layersynth/simulation.hpp"
#include "layersynth/synthesis.hpp"
#include "layersynth/verification.hpp"

namespace layersynth::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary string so a failed command leaves no partial file.
void write_file(const std::string& path, const std::string& contents) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write " + path);
  os << contents;
  if (!os) throw InputError("failed writing " + path);
}

template <class Writer>
std::string to_text(Writer&& w) {
  std::ostringstream ss;
  w(ss);
  return ss.str();
}

// Runs a command body, translating the error taxonomy into exit codes.
// `numeric_code` is the class a NumericError belongs to in this command.
CommandResult guarded(const std::function<CommandResult()>& body, int numeric_code,
                      std::ostream& err) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return {kInputError, {}, e.what()};
  } catch (const AssumptionError& e) {
    err << "error: " << e.what() << "\n";
    return {kAssumptionError, {}, e.what()};
  } catch (const SynthesisError& e) {
    err << "error: " << e.what() << "\n";
    return {kSynthesisError, {}, e.what()};
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return {numeric_code, {}, e.what()};
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return {kInputError, {}, e.what()};
  }
}

std::string synth_line(const InterfaceDesign& d) {
  return "lambda=" + fmt(d.cert.lambda) + " rho=" + fmt(d.cert.rho) + " alpha=" +
         fmt(d.cert.alpha) + " epsilon=" + fmt(d.cert.epsilon) +
         (d.meta.fallback_used ? " (constructive fallback)" : "");
}

// max_t (mean_dist_t - ci95_t)
double empirical_excess(const McSummary& s) {
  double worst = -INFINITY;
  for (std::size_t t = 0; t < s.mean_dist.size(); ++t) {
    worst = std::max(worst, s.mean_dist[t] - s.ci95[t]);
  }
  return worst;
}

struct SimOutcome {
  McResult result;
  double lower_edge = 0.0;  // max_t (mean_dist - ci95)
  bool bound_respected = false;
  std::string line;
};

SimOutcome simulate(const Architecture& arch, const InterfaceDesign& design, std::size_t traces,
                    unsigned threads) {
  SimOutcome o;
  o.result = monte_carlo(arch, design, McOptions{traces, threads});
  const McSummary& s = o.result.summary;
  o.lower_edge = empirical_excess(s);
  o.bound_respected = o.lower_edge <= s.epsilon;
  o.line = "max_t mean_dist=" + fmt(s.max_mean_dist) + " max_t(mean_dist-ci95)=" +
           fmt(o.lower_edge) + " epsilon=" + fmt(s.epsilon) +
           (o.bound_respected ? " bound respected" : " BOUND VIOLATED");
  return o;
}

}  // namespace

std::vector<double> parse_lambda_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InputError("lambda grid: cannot parse '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw InputError("lambda grid: cannot parse '" + item + "'");
    if (!(v > 0.0 && v < 1.0)) throw InputError("lambda grid: values must lie in (0, 1)");
    if (!grid.empty() && v <= grid.back()) {
      throw InputError("lambda grid: values must be strictly increasing");
    }
    grid.push_back(v);
  }
  if (grid.empty()) throw InputError("lambda grid: empty");
  return grid;
}

Architecture apply_overrides(Architecture arch, const Overrides& o) {
  if (o.trials) arch.sim.trials = *o.trials;
  if (o.horizon) arch.sim.horizon = *o.horizon;
  if (o.seed) arch.sim.seed = *o.seed;
  if (o.lambda_grid) arch.synth.lambda_grid = *o.lambda_grid;
  if (o.spectral_R) arch.synth.spectral_R = true;
  if (arch.sim.trials == 0) throw InputError("trials must be positive");
  if (arch.sim.horizon == 0) throw InputError("horizon must be positive");
  return validate(arch);
}

CommandResult cmd_synth(const std::string& config_path, const std::string& out_path,
                        const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const Architecture arch = apply_overrides(load_config_file(config_path), o);
        const InterfaceDesign design = design_pipeline(arch);
        write_file(out_path, design_to_json(design));
        CommandResult r{kOk, {out_path}, synth_line(design)};
        out << r.summary_line << "\n";
        return r;
      },
      kSynthesisError, err);
}

CommandResult cmd_sim(const std::string& config_path, const std::string& design_path,
                      const std::string& out_csv, const std::string& traces_dir,
                      const Overrides& o, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const Architecture arch = apply_overrides(load_config_file(config_path), o);
        const InterfaceDesign design = design_from_json(read_file(design_path));
        const std::size_t traces = traces_dir.empty() ? 0 : arch.sim.trials;
        const SimOutcome sim = simulate(arch, design, traces, o.threads);
        CommandResult r{sim.bound_respected ? kOk : kEmpiricalError, {}, sim.line};
        write_file(out_csv, to_text([&](std::ostream& os) {
                     write_summary_csv(os, sim.result.summary);
                   }));
        r.artifacts_written.push_back(out_csv);
        if (!traces_dir.empty()) {
          const std::string path = (fs::path(traces_dir) / "trials.csv").string();
          write_file(path, to_text([&](std::ostream& os) {
                       write_trials_csv(os, sim.result.traces);
                     }));
          r.artifacts_written.push_back(path);
        }
        out << r.summary_line << "\n";
        return r;
      },
      kEmpiricalError, err);
}

CommandResult cmd_check(const std::string& design_path, const std::string& config_path,
                        std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const Architecture arch = load_config_file(config_path);
        const InterfaceDesign design = design_from_json(read_file(design_path));
        const CheckReport report = verify_design(arch, design);
        std::size_t failed = 0;
        for (const auto& item : report.items) {
          out << (item.passed ? "PASS " : "FAIL ") << item.name << ": " << item.detail << "\n";
          if (!item.passed) ++failed;
        }
        CommandResult r;
        r.exit_code = failed == 0 ? kOk : kVerificationError;
        r.summary_line = failed == 0 ? "all " + std::to_string(report.items.size()) +
                                           " checks passed"
                                     : std::to_string(failed) + " of " +
                                           std::to_string(report.items.size()) +
                                           " checks failed";
        out << r.summary_line << "\n";
        return r;
      },
      kVerificationError, err);
}

CommandResult cmd_case(const std::string& name, const std::string& out_dir, const Overrides& o,
                       std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const auto text = bundled_config(name);
        if (!text) {
          std::string known;
          for (const auto& n : bundled_config_names()) known += (known.empty() ? "" : ", ") + n;
          throw InputError("unknown case '" + name + "' (known: " + known + ")");
        }
        const Architecture arch = apply_overrides(load_config(*text), o);
        const InterfaceDesign design = design_pipeline(arch);
        out << name << ": " << synth_line(design) << "\n";

        constexpr std::size_t kTraceTrials = 20;
        const SimOutcome sim =
            simulate(arch, design, std::min(kTraceTrials, arch.sim.trials), o.threads);

        const fs::path dir(out_dir);
        CommandResult r{sim.bound_respected ? kOk : kEmpiricalError, {}, ""};
        auto emit = [&](const char* file, const std::string& contents) {
          const std::string path = (dir / file).string();
          write_file(path, contents);
          r.artifacts_written.push_back(path);
        };
        emit("design.json", design_to_json(design));
        emit("summary.csv",
             to_text([&](std::ostream& os) { write_summary_csv(os, sim.result.summary); }));
        emit("trials.csv",
             to_text([&](std::ostream& os) { write_trials_csv(os, sim.result.traces); }));
        emit("plot.csv",
             to_text([&](std::ostream& os) { write_plot_csv(os, sim.result.summary); }));
        r.summary_line = name + ": epsilon=" + fmt(design.cert.epsilon) + " " + sim.line;
        out << r.summary_line << "\n";
        return r;
      },
      kSynthesisError, err);
}

}  // namespace layersynth::cli
