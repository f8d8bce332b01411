#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "layersynth/errors.hpp"
#include "layersynth/estimation.hpp"
#include "layersynth/simulation.hpp"
#include "layersynth/synthesis.hpp"
#include "layersynth/system_model.hpp"
#include "layersynth/verification.hpp"

namespace py = pybind11;
using namespace layersynth;

namespace {

Architecture with_sim(Architecture arch, std::optional<std::size_t> trials,
                      std::optional<std::size_t> horizon, std::optional<std::uint64_t> seed) {
  if (trials) arch.sim.trials = *trials;
  if (horizon) arch.sim.horizon = *horizon;
  if (seed) arch.sim.seed = *seed;
  return validate(arch);
}

Vec to_array(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PYBIND11_MODULE(_layersynth, m) {
  m.doc() = "Interface synthesis and Monte Carlo validation for two-layer stochastic systems";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<AssumptionError>(m, "AssumptionError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<SynthesisError>(m, "SynthesisError", PyExc_RuntimeError);

  m.def("bundled_config", [](const std::string& name) {
    const auto text = bundled_config(name);
    if (!text) throw InputError("unknown case '" + name + "'");
    return std::string(*text);
  }, py::arg("name"), "JSON text of a bundled case-study configuration.");
  m.def("bundled_config_names", &bundled_config_names);

  m.def("normalize_config", [](const std::string& text) {
    return serialize_config(load_config(text));
  }, py::arg("config_json"), "Validates a configuration and returns its discrete-time form.");

  m.def("rho_of_lambda", &rho_of_lambda, py::arg("lam"));

  m.def("kalman_predictor", [](const Mat& a, const Mat& c, const Mat& w, const Mat& v) {
    LinearSystem sys{a, Mat::Zero(a.rows(), 1), c, w, v, Vec::Zero(a.rows())};
    validate_system(sys, "system");
    const Estimator e = build_estimator(sys);
    return py::make_tuple(e.gain, e.error_cov);
  }, py::arg("A"), py::arg("C"), py::arg("Sigma_w"), py::arg("Sigma_v"),
     "Steady-state predictor gain L and error covariance Sigma_e.");

  m.def("synthesize", [](const std::string& config_json) {
    const Architecture arch = load_config(config_json);
    py::gil_scoped_release release;
    return design_to_json(design_pipeline(arch));
  }, py::arg("config_json"), "Runs the synthesis pipeline and returns the design JSON.");

  m.def("verify", [](const std::string& config_json, const std::string& design_json) {
    const CheckReport r = verify_design(load_config(config_json), design_from_json(design_json));
    py::list items;
    for (const auto& it : r.items) {
      py::dict d;
      d["name"] = it.name;
      d["value"] = it.value;
      d["threshold"] = it.threshold;
      d["passed"] = it.passed;
      d["detail"] = it.detail;
      items.append(d);
    }
    return items;
  }, py::arg("config_json"), py::arg("design_json"),
     "Independent re-verification; one dict per check.");

  m.def("simulate", [](const std::string& config_json, const std::string& design_json,
                       std::optional<std::size_t> trials, std::optional<std::size_t> horizon,
                       std::optional<std::uint64_t> seed, unsigned threads) {
    const Architecture arch = with_sim(load_config(config_json), trials, horizon, seed);
    const InterfaceDesign design = design_from_json(design_json);
    McOptions opts;
    opts.threads = threads;
    McSummary s;
    {
      py::gil_scoped_release release;
      s = monte_carlo(arch, design, opts).summary;
    }
    py::dict d;
    d["mean_dist"] = to_array(s.mean_dist);
    d["std_dist"] = to_array(s.std_dist);
    d["ci95"] = to_array(s.ci95);
    d["mean_V"] = to_array(s.mean_V);
    d["mean_norm_y1"] = to_array(s.mean_norm_y1);
    d["mean_norm_y2"] = to_array(s.mean_norm_y2);
    d["epsilon"] = s.epsilon;
    d["trials"] = s.trials;
    d["seed"] = s.seed;
    d["max_mean_dist"] = s.max_mean_dist;
    return d;
  }, py::arg("config_json"), py::arg("design_json"), py::arg("trials") = py::none(),
     py::arg("horizon") = py::none(), py::arg("seed") = py::none(), py::arg("threads") = 0u,
     "Monte Carlo summary statistics as numpy arrays indexed by t = 0..T.");
}
