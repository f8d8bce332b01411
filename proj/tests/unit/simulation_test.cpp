#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "layersynth/errors.hpp"
#include "layersynth/estimation.hpp"
#include "layersynth/simulation.hpp"
#include "test_support.hpp"

using namespace layersynth;
using namespace test_support;

namespace {

// Design assembled from given parts; the certificate is recomputed.
InterfaceDesign make_design(const Architecture& arch, const InterfaceMaps& maps, const Mat& M,
                            const Mat& K, double lambda, const Mat& R) {
  InterfaceDesign d;
  d.maps = maps;
  d.upper_est = build_estimator(arch.upper);
  d.lower_est = build_estimator(arch.lower);
  d.R = R;
  d.K = K;
  d.cert = compute_certificate(arch, maps, d.upper_est, d.lower_est, M, K, lambda, R);
  return d;
}

// Case-study design from the reference SDP solution at the smallest lambda.
InterfaceDesign reference_design(const Architecture& arch, const std::string& name) {
  const auto& ref = oracle()[name]["sdp"][0];
  return make_design(arch, solve_interface_maps(arch.upper, arch.lower), to_mat(ref["M"]),
                     to_mat(ref["K"]), ref["lambda"].get<double>(), to_mat(ref["R"]));
}

InterfaceDesign twin_design(const Architecture& arch) {
  const Eigen::Index n = arch.lower.states(), m = arch.lower.inputs();
  return make_design(arch, InterfaceMaps{Mat::Identity(n, n), Mat::Zero(m, n), 0, 0},
                     Mat::Identity(n, n), Mat::Zero(m, n), 0.5, Mat::Identity(m, m));
}

}  // namespace

TEST_SUITE("simulation") {
  TEST_CASE("Philox4x32-10 known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                     {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                     {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("standard normals are reproducible, stream-separated and standard") {
    const Vec a = standard_normals(5, 3, Stream::upper_process, 7, 5);
    CHECK(a == standard_normals(5, 3, Stream::upper_process, 7, 5));
    CHECK(a != standard_normals(5, 3, Stream::lower_process, 7, 5));
    CHECK(a != standard_normals(5, 4, Stream::upper_process, 7, 5));
    CHECK(a != standard_normals(6, 3, Stream::upper_process, 7, 5));
    CHECK(a != standard_normals(5, 3, Stream::upper_process, 8, 5));
    // A shorter request is a prefix of a longer one.
    CHECK(standard_normals(5, 3, Stream::upper_process, 7, 3) == a.head(3));

    const int n = 200000;
    double sum = 0, sum2 = 0, sum4 = 0;
    for (int t = 0; t < n / 4; ++t) {
      const Vec z = standard_normals(11, 0, Stream::upper_measurement, t, 4);
      sum += z.sum();
      sum2 += z.squaredNorm();
      sum4 += z.array().pow(4).sum();
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(sum2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(sum4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
  }

  TEST_CASE("lqg_gain") {
    UpperControllerCfg cfg;
    cfg.state_penalty = mat1(1.0);
    cfg.input_penalty = mat1(1.0);
    CHECK(lqg_gain(scalar_system(0.0, 1.0, 1.0, 1.0, 1.0), cfg)(0, 0) == 0.0);
    CHECK(lqg_gain(scalar_system(1.0, 1.0, 1.0, 1.0, 1.0), cfg)(0, 0) ==
          doctest::Approx(oracle()["scalar"]["lqr_gain"].get<double>()).epsilon(1e-10));
    for (const char* name : {"uav", "hexacopter"}) {
      CAPTURE(name);
      const Architecture arch = bundled(name);
      const Mat k = lqg_gain(arch.upper, arch.upper_controller);
      CHECK(rel_diff(k, to_mat(oracle()[name]["K_lqr"])) < 1e-7);
      CHECK(mat::spectral_radius(arch.upper.A - arch.upper.B * k) < 1.0);
    }
    cfg.kind = "pid";
    CHECK_THROWS_AS(lqg_gain(scalar_system(1.0, 1.0, 1.0, 1.0, 1.0), cfg), InputError);
  }

  TEST_CASE("saturate") {
    const Vec unit = Eigen::Vector2d(0.6, 0.8);
    CHECK(saturate(unit, 4.0) == unit);
    const Vec big = saturate(Eigen::Vector2d(3, 4), 4.0);
    CHECK(big(0) == doctest::Approx(2.4).epsilon(1e-15));
    CHECK(big(1) == doctest::Approx(3.2).epsilon(1e-15));
    CHECK(saturate(Vec::Zero(2), 4.0) == Vec::Zero(2));
    CHECK_THROWS_AS(saturate(unit, 0.0), InputError);
  }

  TEST_CASE("interface_control") {
    InterfaceDesign d;
    d.maps = InterfaceMaps{mat1(1.0), mat1(2.0), 0, 0};
    d.R = mat1(1.0);
    d.K = mat1(-0.5);
    CHECK(interface_control(d, vec1(1.0), vec1(1.0), vec1(3.0))(0) == 2.0);
    CHECK(interface_control(d, vec1(1.5), vec1(0.0), vec1(0.0))(0) == 1.5);
    CHECK(interface_control(d, vec1(0.0), vec1(0.0), vec1(4.0))(0) == -2.0);
    CHECK_THROWS_AS(interface_control(d, Vec::Zero(2), vec1(0.0), vec1(0.0)), InputError);
  }

  TEST_CASE("identical noiseless systems track exactly") {
    Architecture arch = twin_architecture(scalar_system(0.9, 1.0, 1.0, 0.0, 0.0, 0.7));
    arch.sim.horizon = 30;
    const InterfaceDesign d = twin_design(arch);
    CHECK(d.cert.epsilon == 0.0);
    const TrialTrace tr = simulate_trial(arch, d, 0, 1);
    REQUIRE(tr.dist.size() == 31);
    for (double v : tr.dist) CHECK(v == 0.0);
    for (double v : tr.V) CHECK(v == 0.0);
    const ContractionReport rep = contraction_report(monte_carlo(arch, d).summary, d.cert);
    CHECK(rep.violations == 0);
    for (double s : rep.step_slack) CHECK(s == 0.0);
    for (double s : rep.recursion_slack) CHECK(s == 0.0);
  }

  TEST_CASE("trial traces follow the closed-loop equations") {
    Architecture arch = twin_architecture(scalar_system(0.9, 1.0, 1.0, 0.2, 0.1, 1.0));
    arch.lower = scalar_system(0.7, 2.0, 1.0, 0.3, 0.2, -0.5);
    arch.u_max = 0.3;
    arch.sim.horizon = 3;
    const InterfaceDesign d = make_design(arch, InterfaceMaps{mat1(1.0), mat1(0.1), 0, 0},
                                          mat1(1.0), mat1(-0.2), 0.5, mat1(0.5));
    const std::uint64_t seed = 99, trial = 4;
    const TrialTrace tr = simulate_trial(arch, d, trial, seed);
    const TrialTrace again = simulate_trial(arch, d, trial, seed);
    CHECK(again.x1 == tr.x1);
    CHECK(again.x2 == tr.x2);
    CHECK(again.dist == tr.dist);
    CHECK(again.V == tr.V);

    // Straight-line re-implementation of the first three steps.
    auto z = [&](Stream s, std::uint32_t t) {
      return standard_normals(seed, trial, s, t, 1)(0);
    };
    const double l1 = d.upper_est.gain(0, 0), l2 = d.lower_est.gain(0, 0);
    const double k_lqr = lqg_gain(arch.upper, arch.upper_controller)(0, 0);
    double x1 = 1.0 + std::sqrt(d.upper_est.error_cov(0, 0)) * z(Stream::upper_initial, 0);
    double x2 = -0.5 + std::sqrt(d.lower_est.error_cov(0, 0)) * z(Stream::lower_initial, 0);
    double xh1 = 1.0, xh2 = -0.5;
    for (std::uint32_t t = 0; t <= 3; ++t) {
      CAPTURE(t);
      const double y1 = x1 + std::sqrt(0.1) * z(Stream::upper_measurement, t);
      const double y2 = x2 + std::sqrt(0.2) * z(Stream::lower_measurement, t);
      double u1 = -k_lqr * xh1;
      if (std::abs(u1) > 0.3) u1 = std::copysign(0.3, u1);
      const double u2 = 0.5 * u1 + 0.1 * xh1 - 0.2 * (xh2 - xh1);
      CHECK(tr.x1[t](0) == doctest::Approx(x1).epsilon(1e-13));
      CHECK(tr.x2[t](0) == doctest::Approx(x2).epsilon(1e-13));
      CHECK(tr.y1[t](0) == doctest::Approx(y1).epsilon(1e-13));
      CHECK(tr.u1[t](0) == doctest::Approx(u1).epsilon(1e-13));
      CHECK(tr.u2[t](0) == doctest::Approx(u2).epsilon(1e-13));
      CHECK(tr.dist[t] == doctest::Approx(std::abs(y1 - y2)).epsilon(1e-12));
      CHECK(tr.V[t] == doctest::Approx((xh2 - xh1) * (xh2 - xh1) + d.cert.trace_S));
      const double nxh1 = 0.9 * xh1 + u1 + l1 * (y1 - xh1);
      const double nxh2 = 0.7 * xh2 + 2.0 * u2 + l2 * (y2 - xh2);
      x1 = 0.9 * x1 + u1 + std::sqrt(0.2) * z(Stream::upper_process, t);
      x2 = 0.7 * x2 + 2.0 * u2 + std::sqrt(0.3) * z(Stream::lower_process, t);
      xh1 = nxh1;
      xh2 = nxh2;
    }
  }

  TEST_CASE("recorded inputs obey saturation and the interface law") {
    const Architecture arch = bundled("uav");
    const InterfaceDesign d = reference_design(arch, "uav");
    const TrialTrace tr = simulate_trial(arch, d, 0, arch.sim.seed);
    REQUIRE(tr.u1.size() == arch.sim.horizon + 1);
    for (std::size_t t = 0; t < tr.u1.size(); ++t) {
      CHECK(tr.u1[t].norm() <= arch.u_max * (1.0 + 1e-15));
      const Vec u2 = d.R * tr.u1[t] + d.maps.Q * tr.xhat1[t] +
                     d.K * (tr.xhat2[t] - d.maps.P * tr.xhat1[t]);
      CHECK((tr.u2[t] - u2).norm() == 0.0);
      CHECK(tr.V[t] >= d.cert.trace_S);
      CHECK(tr.dist[t] >= 0.0);
    }
  }

  TEST_CASE("single-trial summary equals the trace") {
    Architecture arch = bundled("uav");
    arch.sim.trials = 1;
    arch.sim.horizon = 20;
    const InterfaceDesign d = reference_design(arch, "uav");
    const McResult r = monte_carlo(arch, d, {1, 1});
    REQUIRE(r.traces.size() == 1);
    CHECK(r.summary.mean_dist == r.traces[0].dist);
    CHECK(r.summary.mean_V == r.traces[0].V);
    for (double s : r.summary.std_dist) CHECK(s == 0.0);
    for (double s : r.summary.ci95) CHECK(s == 0.0);
  }

  TEST_CASE("Monte Carlo output does not depend on the thread count") {
    Architecture arch = bundled("hexacopter");
    arch.sim.trials = 37;
    arch.sim.horizon = 40;
    const InterfaceDesign d = reference_design(arch, "hexacopter");
    const McResult one = monte_carlo(arch, d, {3, 1});
    const McResult many = monte_carlo(arch, d, {3, 5});
    std::ostringstream a, b;
    write_summary_csv(a, one.summary);
    write_summary_csv(b, many.summary);
    CHECK(a.str() == b.str());
    CHECK(one.summary.mean_gap_sq == many.summary.mean_gap_sq);
    std::ostringstream ta, tb;
    write_trials_csv(ta, one.traces);
    write_trials_csv(tb, many.traces);
    CHECK(ta.str() == tb.str());

    arch.sim.seed += 1;
    std::ostringstream c;
    write_summary_csv(c, monte_carlo(arch, d, {0, 2}).summary);
    CHECK(c.str() != a.str());
  }

  TEST_CASE("UAV bound, output-gap and contraction diagnostics at 200 trials") {
    const Architecture arch = bundled("uav");
    const InterfaceDesign d = reference_design(arch, "uav");
    const McSummary s = monte_carlo(arch, d).summary;
    CHECK(s.trials == 200);
    CHECK(s.mean_dist.size() == 101);
    CHECK(s.max_mean_dist <= s.epsilon);
    const double n = static_cast<double>(s.trials);
    for (std::size_t t = 0; t < s.mean_dist.size(); ++t) {
      CHECK(s.ci95[t] == doctest::Approx(1.96 * s.std_dist[t] / std::sqrt(n)).epsilon(1e-14));
      // E||C1 x1 - C2 x2||^2 <= E V, with 3 standard errors of slack.
      const double se = std::sqrt(s.std_gap_sq[t] * s.std_gap_sq[t] +
                                  s.std_V[t] * s.std_V[t]) / std::sqrt(n);
      CHECK(s.mean_gap_sq[t] <= s.mean_V[t] + 3.0 * se);
    }
    const ContractionReport rep = contraction_report(s, d.cert);
    CHECK(rep.violations == 0);
    CHECK(rep.step_slack.size() == 100);
    CHECK(rep.recursion_slack.size() == 101);
  }

  TEST_CASE("non-finite trajectories are reported") {
    Architecture arch = twin_architecture(scalar_system(0.9, 1.0, 1.0, 0.1, 0.1, 1.0));
    arch.sim.horizon = 2000;
    arch.sim.trials = 2;
    InterfaceDesign d = twin_design(arch);
    d.K = mat1(1e3);  // violently unstable lower loop
    CHECK_THROWS_AS(monte_carlo(arch, d, {0, 2}), NumericError);
  }

  TEST_CASE("CSV schemas") {
    Architecture arch = twin_architecture(scalar_system(0.9, 1.0, 1.0, 0.1, 0.1, 1.0));
    arch.sim.horizon = 2;
    arch.sim.trials = 3;
    const InterfaceDesign d = twin_design(arch);
    const McResult r = monte_carlo(arch, d, {2, 0});
    std::ostringstream s, t, p;
    write_summary_csv(s, r.summary);
    write_trials_csv(t, r.traces);
    write_plot_csv(p, r.summary);
    CHECK(s.str().rfind("t,mean_dist,std_dist,ci95,mean_V,epsilon\n0,", 0) == 0);
    CHECK(t.str().rfind("trial,t,dist,V,norm_y1,norm_y2\n0,0,", 0) == 0);
    CHECK(p.str().rfind("t,mean_dist,epsilon\n0,", 0) == 0);
    const std::string summary = s.str(), trials = t.str();
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 4);
    CHECK(std::count(trials.begin(), trials.end(), '\n') == 7);
  }

  TEST_CASE("design and architecture must agree") {
    const Architecture arch = bundled("uav");
    const InterfaceDesign hexa = reference_design(bundled("hexacopter"), "hexacopter");
    CHECK_THROWS_AS(monte_carlo(arch, hexa), InputError);
  }
}
