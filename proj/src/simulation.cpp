#include "layersynth/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>

#include "layersynth/errors.hpp"

namespace layersynth {

// ---------------------------------------------------------------------------
// Random numbers

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

Vec standard_normals(std::uint64_t seed, std::uint64_t trial, Stream stream, std::uint32_t t,
                     Eigen::Index dim) {
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                         static_cast<std::uint32_t>(seed >> 32)};
  Vec out(dim);
  for (Eigen::Index j = 0; 2 * j < dim; ++j) {
    const auto bits = philox4x32({static_cast<std::uint32_t>(j), t,
                                  static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(trial)},
                                 key);
    // Two 53-bit uniforms in (0, 1), then Box-Muller.
    auto uniform = [](std::uint32_t hi, std::uint32_t lo) {
      const std::uint64_t u = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
      return (static_cast<double>(u) + 0.5) * 0x1.0p-53;
    };
    const double u1 = uniform(bits[0], bits[1]);
    const double u2 = uniform(bits[2], bits[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    out(2 * j) = r * std::cos(phi);
    if (2 * j + 1 < dim) out(2 * j + 1) = r * std::sin(phi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Control laws

Mat lqg_gain(const LinearSystem& upper, const UpperControllerCfg& cfg) {
  if (cfg.kind != "lqg") throw InputError("unsupported upper controller kind: " + cfg.kind);
  return mat::solve_control_dare(upper.A, upper.B, cfg.state_penalty, cfg.input_penalty).gain;
}

Vec saturate(const Vec& u, double u_max) {
  if (!(u_max > 0.0)) throw InputError("saturate: u_max must be positive");
  const double norm = u.norm();
  if (norm <= u_max) return u;
  return u * (u_max / norm);
}

Vec interface_control(const InterfaceDesign& d, const Vec& u1, const Vec& xhat1,
                      const Vec& xhat2) {
  if (u1.size() != d.R.cols() || xhat1.size() != d.maps.P.cols() ||
      xhat2.size() != d.maps.P.rows() || d.K.cols() != xhat2.size()) {
    throw InputError("interface_control: dimension mismatch");
  }
  return d.R * u1 + d.maps.Q * xhat1 + d.K * (xhat2 - d.maps.P * xhat1);
}

// ---------------------------------------------------------------------------
// Trials

namespace {

struct SimContext {
  const Architecture& arch;
  const InterfaceDesign& design;
  Mat k_lqr;
  Mat init1, init2;   // square roots of the initial covariances
  Mat w1, v1, w2, v2; // square roots of the noise covariances
  Certificate cert;   // only M and trace_S are used

  SimContext(const Architecture& a, const InterfaceDesign& d) : arch(a), design(d) {
    const LinearSystem& s1 = a.upper;
    const LinearSystem& s2 = a.lower;
    if (d.maps.P.rows() != s2.states() || d.maps.P.cols() != s1.states() ||
        d.maps.Q.rows() != s2.inputs() || d.maps.Q.cols() != s1.states() ||
        d.R.rows() != s2.inputs() || d.R.cols() != s1.inputs() || d.K.rows() != s2.inputs() ||
        d.K.cols() != s2.states() || d.cert.M.rows() != s2.states() ||
        d.upper_est.gain.rows() != s1.states() || d.upper_est.gain.cols() != s1.outputs() ||
        d.lower_est.gain.rows() != s2.states() || d.lower_est.gain.cols() != s2.outputs() ||
        d.upper_est.error_cov.rows() != s1.states() ||
        d.lower_est.error_cov.rows() != s2.states()) {
      throw InputError("design does not match the architecture dimensions");
    }
    k_lqr = lqg_gain(s1, a.upper_controller);
    init1 = mat::sym_sqrt(d.upper_est.error_cov, 1e-8);
    init2 = mat::sym_sqrt(d.lower_est.error_cov, 1e-8);
    w1 = mat::sym_sqrt(s1.sigma_w);
    v1 = mat::sym_sqrt(s1.sigma_v);
    w2 = mat::sym_sqrt(s2.sigma_w);
    v2 = mat::sym_sqrt(s2.sigma_v);
    cert.M = d.cert.M;
    cert.trace_S = d.cert.trace_S;
  }
};

// Per-trial scalar series used by the summary.
struct TrialSeries {
  std::vector<double> dist, V, norm_y1, norm_y2, gap_sq;
};

template <class Sink>
void run_trial(const SimContext& ctx, std::uint64_t trial, std::uint64_t seed, Sink&& sink) {
  const LinearSystem& s1 = ctx.arch.upper;
  const LinearSystem& s2 = ctx.arch.lower;
  const Estimator& e1 = ctx.design.upper_est;
  const Estimator& e2 = ctx.design.lower_est;
  const std::size_t horizon = ctx.arch.sim.horizon;
  auto normals = [&](Stream s, std::size_t t, Eigen::Index dim) {
    return standard_normals(seed, trial, s, static_cast<std::uint32_t>(t), dim);
  };

  Vec x1 = s1.mu0 + ctx.init1 * normals(Stream::upper_initial, 0, s1.states());
  Vec x2 = s2.mu0 + ctx.init2 * normals(Stream::lower_initial, 0, s2.states());
  Vec xh1 = s1.mu0;
  Vec xh2 = s2.mu0;
  for (std::size_t t = 0; t <= horizon; ++t) {
    const Vec y1 = s1.C * x1 + ctx.v1 * normals(Stream::upper_measurement, t, s1.outputs());
    const Vec y2 = s2.C * x2 + ctx.v2 * normals(Stream::lower_measurement, t, s2.outputs());
    const Vec u1 = saturate(-ctx.k_lqr * xh1, ctx.arch.u_max);
    const Vec u2 = interface_control(ctx.design, u1, xh1, xh2);
    const double V = evaluate_V(ctx.cert, ctx.design.maps, xh1, xh2);
    const double gap_sq = (s1.C * x1 - s2.C * x2).squaredNorm();
    if (!y1.allFinite() || !y2.allFinite() || !u2.allFinite() || !std::isfinite(V)) {
      throw NumericError("trial " + std::to_string(trial) + " produced non-finite values at t=" +
                         std::to_string(t));
    }
    sink(t, x1, xh1, y1, u1, x2, xh2, y2, u2, V, gap_sq);
    if (t == horizon) break;
    const Vec xh1_next = estimate_step(s1, e1, xh1, u1, y1);
    const Vec xh2_next = estimate_step(s2, e2, xh2, u2, y2);
    x1 = s1.A * x1 + s1.B * u1 + ctx.w1 * normals(Stream::upper_process, t, s1.states());
    x2 = s2.A * x2 + s2.B * u2 + ctx.w2 * normals(Stream::lower_process, t, s2.states());
    xh1 = xh1_next;
    xh2 = xh2_next;
  }
}

TrialTrace trace_trial(const SimContext& ctx, std::uint64_t trial, std::uint64_t seed) {
  TrialTrace tr;
  run_trial(ctx, trial, seed,
            [&](std::size_t, const Vec& x1, const Vec& xh1, const Vec& y1, const Vec& u1,
                const Vec& x2, const Vec& xh2, const Vec& y2, const Vec& u2, double V, double) {
              tr.x1.push_back(x1);
              tr.xhat1.push_back(xh1);
              tr.y1.push_back(y1);
              tr.u1.push_back(u1);
              tr.x2.push_back(x2);
              tr.xhat2.push_back(xh2);
              tr.y2.push_back(y2);
              tr.u2.push_back(u2);
              tr.dist.push_back((y1 - y2).norm());
              tr.V.push_back(V);
            });
  return tr;
}

TrialSeries series_trial(const SimContext& ctx, std::uint64_t trial, std::uint64_t seed) {
  TrialSeries s;
  run_trial(ctx, trial, seed,
            [&](std::size_t, const Vec&, const Vec&, const Vec& y1, const Vec&, const Vec&,
                const Vec&, const Vec& y2, const Vec&, double V, double gap_sq) {
              s.dist.push_back((y1 - y2).norm());
              s.V.push_back(V);
              s.norm_y1.push_back(y1.norm());
              s.norm_y2.push_back(y2.norm());
              s.gap_sq.push_back(gap_sq);
            });
  return s;
}

// Mean and sample standard deviation over trials, accumulated in trial order.
void moments(const std::vector<TrialSeries>& all, std::vector<double> TrialSeries::*field,
             std::vector<double>& mean, std::vector<double>* stddev) {
  const std::size_t n = all.size();
  const std::size_t len = (all.front().*field).size();
  mean.assign(len, 0.0);
  for (const auto& s : all) {
    for (std::size_t t = 0; t < len; ++t) mean[t] += (s.*field)[t];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  if (stddev == nullptr) return;
  stddev->assign(len, 0.0);
  if (n < 2) return;
  for (const auto& s : all) {
    for (std::size_t t = 0; t < len; ++t) {
      const double d = (s.*field)[t] - mean[t];
      (*stddev)[t] += d * d;
    }
  }
  for (auto& v : *stddev) v = std::sqrt(v / static_cast<double>(n - 1));
}

}  // namespace

TrialTrace simulate_trial(const Architecture& arch, const InterfaceDesign& design,
                          std::uint64_t trial, std::uint64_t master_seed) {
  const SimContext ctx(arch, design);
  return trace_trial(ctx, trial, master_seed);
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("LAYERSYNTH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(std::min(v, 1024L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

McResult monte_carlo(const Architecture& arch, const InterfaceDesign& design,
                     const McOptions& opts) {
  const std::size_t trials = arch.sim.trials;
  const std::uint64_t seed = arch.sim.seed;
  if (trials == 0 || arch.sim.horizon == 0) {
    throw InputError("monte_carlo: trials and horizon must be positive");
  }
  const SimContext ctx(arch, design);

  std::vector<TrialSeries> all(trials);
  const unsigned threads = static_cast<unsigned>(
      std::min<std::size_t>(opts.threads > 0 ? opts.threads : default_thread_count(), trials));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= trials) return;
      try {
        all[k] = series_trial(ctx, k, seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(trials);
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  McResult out;
  McSummary& s = out.summary;
  s.trials = trials;
  s.seed = seed;
  s.epsilon = design.cert.epsilon;
  moments(all, &TrialSeries::dist, s.mean_dist, &s.std_dist);
  moments(all, &TrialSeries::V, s.mean_V, &s.std_V);
  moments(all, &TrialSeries::norm_y1, s.mean_norm_y1, nullptr);
  moments(all, &TrialSeries::norm_y2, s.mean_norm_y2, nullptr);
  moments(all, &TrialSeries::gap_sq, s.mean_gap_sq, &s.std_gap_sq);
  s.ci95.resize(s.std_dist.size());
  for (std::size_t t = 0; t < s.std_dist.size(); ++t) {
    s.ci95[t] = 1.96 * s.std_dist[t] / std::sqrt(static_cast<double>(trials));
  }
  s.max_mean_dist = *std::max_element(s.mean_dist.begin(), s.mean_dist.end());

  const std::size_t keep = std::min(opts.retain_traces, trials);
  for (std::size_t k = 0; k < keep; ++k) out.traces.push_back(trace_trial(ctx, k, seed));
  return out;
}

ContractionReport contraction_report(const McSummary& s, const Certificate& cert) {
  ContractionReport r;
  const std::size_t len = s.mean_V.size();
  if (len == 0) return r;
  const double n = static_cast<double>(s.trials);
  for (std::size_t t = 0; t < len; ++t) {
    r.standard_error.push_back(s.std_V.size() == len ? s.std_V[t] / std::sqrt(n) : 0.0);
  }
  // The initial estimates equal the initial means, so mean_V[0] = V(mu0).
  const double v0 = s.mean_V[0];
  double rho_t = 1.0;
  for (std::size_t t = 0; t < len; ++t) {
    const double bound = rho_t * v0 + cert.alpha * (1.0 - rho_t) / (1.0 - cert.rho);
    const double slack = s.mean_V[t] - bound;
    r.recursion_slack.push_back(slack);
    r.recursion_flagged.push_back(slack > 3.0 * r.standard_error[t] + 1e-12 * (1.0 + bound));
    rho_t *= cert.rho;
    if (t + 1 < len) {
      const double step = s.mean_V[t + 1] - (cert.rho * s.mean_V[t] + cert.alpha);
      r.step_slack.push_back(step);
      r.step_flagged.push_back(step > 3.0 * r.standard_error[t + 1] +
                               1e-12 * (1.0 + s.mean_V[t + 1]));
    }
  }
  r.violations = static_cast<std::size_t>(
      std::count(r.recursion_flagged.begin(), r.recursion_flagged.end(), true) +
      std::count(r.step_flagged.begin(), r.step_flagged.end(), true));
  return r;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_summary_csv(std::ostream& os, const McSummary& s) {
  os << "t,mean_dist,std_dist,ci95,mean_V,epsilon\n";
  for (std::size_t t = 0; t < s.mean_dist.size(); ++t) {
    os << t << ',' << num(s.mean_dist[t]) << ',' << num(s.std_dist[t]) << ',' << num(s.ci95[t])
       << ',' << num(s.mean_V[t]) << ',' << num(s.epsilon) << '\n';
  }
}

void write_trials_csv(std::ostream& os, const std::vector<TrialTrace>& traces) {
  os << "trial,t,dist,V,norm_y1,norm_y2\n";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const TrialTrace& tr = traces[k];
    for (std::size_t t = 0; t < tr.dist.size(); ++t) {
      os << k << ',' << t << ',' << num(tr.dist[t]) << ',' << num(tr.V[t]) << ','
         << num(tr.y1[t].norm()) << ',' << num(tr.y2[t].norm()) << '\n';
    }
  }
}

void write_plot_csv(std::ostream& os, const McSummary& s) {
  os << "t,mean_dist,epsilon\n";
  for (std::size_t t = 0; t < s.mean_dist.size(); ++t) {
    os << t << ',' << num(s.mean_dist[t]) << ',' << num(s.epsilon) << '\n';
  }
}

}  // namespace layersynth
