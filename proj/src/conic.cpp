#include "layersynth/conic.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "layersynth/errors.hpp"

namespace layersynth::conic {

// ---------------------------------------------------------------------------
// Affine expressions

AffineExpr::AffineExpr(Mat constant) : constant_(std::move(constant)) {}

AffineExpr::AffineExpr(Mat constant, std::map<int, Mat> terms)
    : constant_(std::move(constant)), terms_(std::move(terms)) {
  for (const auto& [k, coeff] : terms_) {
    if (coeff.rows() != constant_.rows() || coeff.cols() != constant_.cols()) {
      throw InputError("AffineExpr: coefficient shape mismatch");
    }
  }
}

AffineExpr AffineExpr::zero(Eigen::Index rows, Eigen::Index cols) {
  return AffineExpr(Mat::Zero(rows, cols));
}

AffineExpr AffineExpr::scalar(double value) {
  return AffineExpr(Mat::Constant(1, 1, value));
}

AffineExpr AffineExpr::transpose() const {
  AffineExpr out(constant_.transpose());
  for (const auto& [k, coeff] : terms_) out.terms_.emplace(k, coeff.transpose());
  return out;
}

AffineExpr AffineExpr::trace() const {
  if (rows() != cols()) throw InputError("AffineExpr::trace: expression is not square");
  AffineExpr out = scalar(constant_.trace());
  for (const auto& [k, coeff] : terms_) {
    out.terms_.emplace(k, Mat::Constant(1, 1, coeff.trace()));
  }
  return out;
}

AffineExpr AffineExpr::block(const std::vector<std::vector<AffineExpr>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw InputError("AffineExpr::block: empty block layout");
  }
  std::vector<Eigen::Index> heights;
  std::vector<Eigen::Index> widths;
  for (const auto& e : rows.front()) widths.push_back(e.cols());
  for (const auto& row : rows) {
    if (row.size() != widths.size()) {
      throw InputError("AffineExpr::block: ragged block layout");
    }
    heights.push_back(row.front().rows());
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j].rows() != heights.back() || row[j].cols() != widths[j]) {
        throw InputError("AffineExpr::block: incompatible block dimensions");
      }
    }
  }
  Eigen::Index total_rows = 0;
  Eigen::Index total_cols = 0;
  for (auto h : heights) total_rows += h;
  for (auto w : widths) total_cols += w;

  AffineExpr out(Mat::Zero(total_rows, total_cols));
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < widths.size(); ++j) {
      const AffineExpr& e = rows[i][j];
      out.constant_.block(r0, c0, heights[i], widths[j]) = e.constant_;
      for (const auto& [k, coeff] : e.terms_) {
        auto it = out.terms_.find(k);
        if (it == out.terms_.end()) {
          it = out.terms_.emplace(k, Mat::Zero(total_rows, total_cols)).first;
        }
        it->second.block(r0, c0, heights[i], widths[j]) = coeff;
      }
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  return out;
}

Mat AffineExpr::evaluate(std::span<const double> y) const {
  Mat out = constant_;
  for (const auto& [k, coeff] : terms_) {
    if (k < 0 || static_cast<std::size_t>(k) >= y.size()) {
      throw InputError("AffineExpr::evaluate: assignment too short");
    }
    out += y[static_cast<std::size_t>(k)] * coeff;
  }
  return out;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& rhs) {
  if (rows() != rhs.rows() || cols() != rhs.cols()) {
    throw InputError("AffineExpr: shape mismatch in addition");
  }
  constant_ += rhs.constant_;
  for (const auto& [k, coeff] : rhs.terms_) {
    auto it = terms_.find(k);
    if (it == terms_.end()) {
      terms_.emplace(k, coeff);
    } else {
      it->second += coeff;
    }
  }
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& rhs) {
  AffineExpr neg = rhs;
  neg *= -1.0;
  return *this += neg;
}

AffineExpr& AffineExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& [k, coeff] : terms_) coeff *= s;
  return *this;
}

AffineExpr operator*(const Mat& left, const AffineExpr& e) {
  if (left.cols() != e.rows()) throw InputError("AffineExpr: shape mismatch in product");
  AffineExpr out(left * e.constant_);
  for (const auto& [k, coeff] : e.terms_) out.terms_.emplace(k, left * coeff);
  return out;
}

AffineExpr operator*(const AffineExpr& e, const Mat& right) {
  if (e.cols() != right.rows()) throw InputError("AffineExpr: shape mismatch in product");
  AffineExpr out(e.constant_ * right);
  for (const auto& [k, coeff] : e.terms_) out.terms_.emplace(k, coeff * right);
  return out;
}

// ---------------------------------------------------------------------------
// Problem builder

Variable SdpProblem::add_symmetric(std::string name, Eigen::Index n) {
  if (n <= 0) throw InputError("add_symmetric: dimension must be positive");
  Variable v{std::move(name), n, n, true, num_scalars_, AffineExpr::zero(n, n)};
  std::map<int, Mat> terms;
  int k = num_scalars_;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      Mat e = Mat::Zero(n, n);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      terms.emplace(k++, std::move(e));
    }
  }
  num_scalars_ = k;
  v.expr = AffineExpr(Mat::Zero(n, n), std::move(terms));
  variables_.push_back(v);
  return v;
}

Variable SdpProblem::add_matrix(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw InputError("add_matrix: dimensions must be positive");
  Variable v{std::move(name), rows, cols, false, num_scalars_, AffineExpr::zero(rows, cols)};
  std::map<int, Mat> terms;
  int k = num_scalars_;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      Mat e = Mat::Zero(rows, cols);
      e(i, j) = 1.0;
      terms.emplace(k++, std::move(e));
    }
  }
  num_scalars_ = k;
  v.expr = AffineExpr(Mat::Zero(rows, cols), std::move(terms));
  variables_.push_back(v);
  return v;
}

Variable SdpProblem::add_scalar(std::string name) { return add_matrix(std::move(name), 1, 1); }

void SdpProblem::minimize(AffineExpr objective) {
  if (objective.rows() != 1 || objective.cols() != 1) {
    throw InputError("malformed problem: objective must be scalar");
  }
  objective_ = std::move(objective);
}

void SdpProblem::require_psd(AffineExpr expr, std::string label) {
  if (expr.rows() != expr.cols() || expr.rows() == 0) {
    throw InputError("malformed problem: block '" + label + "' is not square");
  }
  auto symmetric = [](const Mat& m) {
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
  };
  if (!symmetric(expr.constant())) {
    throw InputError("malformed problem: block '" + label + "' is not symmetric");
  }
  for (const auto& [k, coeff] : expr.terms()) {
    if (!symmetric(coeff)) {
      throw InputError("malformed problem: block '" + label + "' is not symmetric");
    }
  }
  if (!expr.constant().allFinite()) {
    throw InputError("malformed problem: block '" + label + "' has non-finite data");
  }
  blocks_.push_back({std::move(label), std::move(expr)});
}

void SdpProblem::check_well_formed() const {
  auto check = [&](const AffineExpr& e, const std::string& what) {
    for (const auto& [k, coeff] : e.terms()) {
      if (k < 0 || k >= num_scalars_) {
        throw InputError("malformed problem: " + what + " references an undeclared variable");
      }
      if (!coeff.allFinite()) {
        throw InputError("malformed problem: " + what + " has non-finite data");
      }
    }
  };
  check(objective_, "objective");
  for (const auto& b : blocks_) check(b.expr, "block '" + b.label + "'");
}

std::string to_string(SdpStatus status) {
  switch (status) {
    case SdpStatus::optimal:
      return "optimal";
    case SdpStatus::infeasible:
      return "infeasible";
    case SdpStatus::max_iters:
      return "max_iters";
  }
  return "unknown";
}

Mat SdpSolution::value(const Variable& v) const { return v.expr.evaluate(y); }

double lmi_margin(std::span<const Mat> blocks) {
  double margin = std::numeric_limits<double>::infinity();
  for (const Mat& b : blocks) {
    if (!mat::is_symmetric(b, 1e-9)) throw InputError("lmi_margin: block is not symmetric");
    margin = std::min(margin, mat::min_eigenvalue(b));
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Interior-point solver

namespace {

struct Triplet {
  Eigen::Index r;
  Eigen::Index c;
  double v;
};

struct BlockData {
  Eigen::Index n = 0;
  Mat f0;
  std::vector<int> vars;                      // scalars appearing in this block
  std::vector<std::vector<Triplet>> coeffs;   // matching sparse coefficients
};

struct LmiData {
  int m = 0;
  Vec c;
  double c0 = 0.0;
  std::vector<BlockData> blocks;
};

LmiData lower(const SdpProblem& problem) {
  LmiData d;
  d.m = problem.num_scalars();
  d.c = Vec::Zero(d.m);
  d.c0 = problem.objective().constant()(0, 0);
  for (const auto& [k, coeff] : problem.objective().terms()) d.c(k) += coeff(0, 0);
  for (const auto& b : problem.blocks()) {
    BlockData bd;
    bd.n = b.expr.rows();
    bd.f0 = mat::symmetrize(b.expr.constant());
    for (const auto& [k, coeff] : b.expr.terms()) {
      std::vector<Triplet> trips;
      for (Eigen::Index j = 0; j < coeff.cols(); ++j) {
        for (Eigen::Index i = 0; i < coeff.rows(); ++i) {
          const double v = 0.5 * (coeff(i, j) + coeff(j, i));
          if (v != 0.0) trips.push_back({i, j, v});
        }
      }
      if (trips.empty()) continue;
      bd.vars.push_back(k);
      bd.coeffs.push_back(std::move(trips));
    }
    // Positive rescaling leaves the feasible set unchanged and evens out the
    // conditioning of the Newton system across blocks.
    double scale = bd.f0.cwiseAbs().maxCoeff();
    for (const auto& trips : bd.coeffs) {
      for (const auto& tr : trips) scale = std::max(scale, std::abs(tr.v));
    }
    if (scale > 0.0) {
      bd.f0 /= scale;
      for (auto& trips : bd.coeffs) {
        for (auto& tr : trips) tr.v /= scale;
      }
    }
    d.blocks.push_back(std::move(bd));
  }
  return d;
}

// Keeps a maximal set of scalars whose coefficient matrices are linearly
// independent; the others can be fixed at zero without changing the set of
// attainable block values. Returns the kept indices in increasing order.
std::vector<int> independent_scalars(const LmiData& d) {
  Mat gram = Mat::Zero(d.m, d.m);
  for (const auto& b : d.blocks) {
    Mat dense = Mat::Zero(b.n, b.n);
    for (std::size_t t = 0; t < b.vars.size(); ++t) {
      for (const auto& tr : b.coeffs[t]) dense(tr.r, tr.c) = tr.v;
      for (std::size_t u = 0; u <= t; ++u) {
        double acc = 0.0;
        for (const auto& tr : b.coeffs[u]) acc += tr.v * dense(tr.r, tr.c);
        gram(b.vars[u], b.vars[t]) += acc;
      }
      for (const auto& tr : b.coeffs[t]) dense(tr.r, tr.c) = 0.0;
    }
  }
  gram = gram.selfadjointView<Eigen::Upper>();
  Eigen::ColPivHouseholderQR<Mat> qr(gram);
  qr.setThreshold(1e-12);
  const auto rank = qr.rank();
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < rank; ++i) keep.push_back(qr.colsPermutation().indices()(i));
  std::sort(keep.begin(), keep.end());
  if (rank == d.m) return keep;

  // The objective must not vary along directions invisible to the blocks.
  std::vector<bool> kept(static_cast<std::size_t>(d.m), false);
  for (int k : keep) kept[static_cast<std::size_t>(k)] = true;
  Mat gkk(rank, rank);
  Vec ck(rank);
  for (Eigen::Index i = 0; i < rank; ++i) {
    ck(i) = d.c(keep[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < rank; ++j) {
      gkk(i, j) = gram(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
    }
  }
  const Eigen::LDLT<Mat> ldlt(gkk);
  for (int k = 0; k < d.m; ++k) {
    if (kept[static_cast<std::size_t>(k)]) continue;
    Vec gk(rank);
    for (Eigen::Index i = 0; i < rank; ++i) gk(i) = gram(keep[static_cast<std::size_t>(i)], k);
    const double predicted = ck.dot(ldlt.solve(gk));
    if (std::abs(d.c(k) - predicted) > 1e-9 * (1.0 + d.c.cwiseAbs().maxCoeff())) {
      throw InputError(
          "malformed problem: objective is unbounded along a direction that leaves every "
          "block unchanged");
    }
  }
  return keep;
}

LmiData restrict_to(const LmiData& d, const std::vector<int>& keep) {
  std::vector<int> index(static_cast<std::size_t>(d.m), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) index[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);
  LmiData r;
  r.m = static_cast<int>(keep.size());
  r.c = Vec(r.m);
  for (int i = 0; i < r.m; ++i) r.c(i) = d.c(keep[static_cast<std::size_t>(i)]);
  r.c0 = d.c0;
  for (const auto& b : d.blocks) {
    BlockData nb;
    nb.n = b.n;
    nb.f0 = b.f0;
    for (std::size_t t = 0; t < b.vars.size(); ++t) {
      const int j = index[static_cast<std::size_t>(b.vars[t])];
      if (j < 0) continue;
      nb.vars.push_back(j);
      nb.coeffs.push_back(b.coeffs[t]);
    }
    r.blocks.push_back(std::move(nb));
  }
  return r;
}

// F_b(y) - F_b0
Mat apply_adjoint(const BlockData& b, const Vec& y) {
  Mat out = Mat::Zero(b.n, b.n);
  for (std::size_t t = 0; t < b.vars.size(); ++t) {
    const double yk = y(b.vars[t]);
    if (yk == 0.0) continue;
    for (const auto& tr : b.coeffs[t]) out(tr.r, tr.c) += yk * tr.v;
  }
  return out;
}

// out_k += <F_bk, X>
void apply_operator(const BlockData& b, const Mat& x, Vec& out) {
  for (std::size_t t = 0; t < b.vars.size(); ++t) {
    double acc = 0.0;
    for (const auto& tr : b.coeffs[t]) acc += tr.v * x(tr.c, tr.r);
    out(b.vars[t]) += acc;
  }
}

// Largest step a with S + a dS >= 0 (infinity if unbounded).
double max_step(const Eigen::LLT<Mat>& chol, const Mat& ds) {
  const Mat& l = chol.matrixL();
  Mat tmp = l.triangularView<Eigen::Lower>().solve(ds);
  Mat m = l.triangularView<Eigen::Lower>().solve(tmp.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(mat::symmetrize(m), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0);
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct CoreResult {
  bool converged = false;
  Vec y;
  double pobj = 0.0;
  double dobj = 0.0;
  int iterations = 0;
};

struct CoreOptions {
  double tol = 1e-8;
  int max_iters = 150;
  // Phase one: stop as soon as scalar `early_index` is below `early_value`
  // at a primal feasible point.
  int early_index = -1;
  double early_value = 0.0;
  bool verbose = false;
};

CoreResult interior_point(const LmiData& d, const Vec& y0, const CoreOptions& opts) {
  const std::size_t nb = d.blocks.size();
  std::vector<int> uses(static_cast<std::size_t>(d.m), 0);
  for (const auto& b : d.blocks) {
    for (int k : b.vars) ++uses[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < d.m; ++k) {
    if (uses[static_cast<std::size_t>(k)] == 0 && d.c(k) != 0.0) {
      throw InputError("malformed problem: objective is unbounded in an unconstrained variable");
    }
  }

  double data_scale = 1.0;
  double coeff_scale = 1.0;
  double f0_norm2 = 0.0;
  for (const auto& b : d.blocks) {
    data_scale = std::max(data_scale, b.f0.cwiseAbs().maxCoeff());
    f0_norm2 += b.f0.squaredNorm();
    for (const auto& trips : b.coeffs) {
      for (const auto& tr : trips) coeff_scale = std::max(coeff_scale, std::abs(tr.v));
    }
  }
  const double f0_norm = std::sqrt(f0_norm2);
  const double c_norm = d.c.norm();

  Vec y = y0;
  std::vector<Mat> s(nb);
  std::vector<Mat> z(nb);
  Eigen::Index total_n = 0;
  bool feasible_start = true;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& bd = d.blocks[b];
    total_n += bd.n;
    s[b] = bd.f0 + apply_adjoint(bd, y);
    if (mat::min_eigenvalue(s[b]) <= 1e-8 * data_scale) feasible_start = false;
  }
  const double zeta = 10.0 * std::max(1.0, d.c.cwiseAbs().maxCoeff() / coeff_scale);
  const double xi = 10.0 * data_scale;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& bd = d.blocks[b];
    if (!feasible_start) s[b] = xi * Mat::Identity(bd.n, bd.n);
    z[b] = zeta * Mat::Identity(bd.n, bd.n);
  }

  CoreResult out;
  int stalls = 0;
  for (int it = 0; it < opts.max_iters; ++it) {
    out.iterations = it;
    std::vector<Mat> rp(nb);
    Vec az = Vec::Zero(d.m);
    double rp_norm2 = 0.0;
    double sz = 0.0;
    double f0z = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& bd = d.blocks[b];
      rp[b] = bd.f0 + apply_adjoint(bd, y) - s[b];
      rp_norm2 += rp[b].squaredNorm();
      apply_operator(bd, z[b], az);
      sz += (s[b].cwiseProduct(z[b])).sum();
      f0z += (bd.f0.cwiseProduct(z[b])).sum();
    }
    Vec rd = d.c - az;
    const double mu = sz / static_cast<double>(total_n);
    const double pobj = d.c.dot(y) + d.c0;
    const double dobj = -f0z + d.c0;
    const double pinf = std::sqrt(rp_norm2) / (1.0 + f0_norm);
    const double dinf = rd.norm() / (1.0 + c_norm);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    out.y = y;
    out.pobj = pobj;
    out.dobj = dobj;
    if (opts.early_index >= 0 && pinf <= opts.tol && y(opts.early_index) < opts.early_value) {
      out.converged = true;
      return out;
    }
    if (opts.verbose) {
      std::fprintf(stderr, "it %3d pinf %.2e dinf %.2e gap %.2e mu %.2e pobj %.8e dobj %.8e\n", it,
                   pinf, dinf, gap, mu, pobj, dobj);
    }
    if (pinf <= opts.tol && dinf <= opts.tol && gap <= opts.tol) {
      out.converged = true;
      return out;
    }
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > 1e12 || mu > 1e14) return out;

    std::vector<Eigen::LLT<Mat>> schol(nb);
    std::vector<Eigen::LLT<Mat>> zchol(nb);
    std::vector<Mat> sinv(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      schol[b].compute(s[b]);
      zchol[b].compute(z[b]);
      if (schol[b].info() != Eigen::Success || zchol[b].info() != Eigen::Success) return out;
      sinv[b] = mat::symmetrize(schol[b].solve(Mat::Identity(d.blocks[b].n, d.blocks[b].n)));
    }

    // Schur complement H_ij = tr(F_i S^-1 F_j Z).
    Mat h = Mat::Zero(d.m, d.m);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& bd = d.blocks[b];
      const std::size_t nv = bd.vars.size();
      for (std::size_t tj = 0; tj < nv; ++tj) {
        Mat g = Mat::Zero(bd.n, bd.n);
        for (const auto& tr : bd.coeffs[tj]) {
          g.noalias() += tr.v * sinv[b].col(tr.r) * z[b].row(tr.c);
        }
        for (std::size_t ti = 0; ti <= tj; ++ti) {
          double acc = 0.0;
          for (const auto& tr : bd.coeffs[ti]) acc += tr.v * g(tr.c, tr.r);
          h(bd.vars[ti], bd.vars[tj]) += acc;
        }
      }
    }
    for (int k = 0; k < d.m; ++k) {
      if (uses[static_cast<std::size_t>(k)] == 0) h(k, k) = 1.0;
    }
    h = h.selfadjointView<Eigen::Upper>();
    Eigen::LLT<Mat> hchol(h);
    if (hchol.info() != Eigen::Success) {
      const double reg = 1e-12 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
      hchol.compute(h + reg * Mat::Identity(d.m, d.m));
      if (hchol.info() != Eigen::Success) return out;
    }

    // Direction for centering sigma with optional second-order term.
    auto direction = [&](double sigma, const std::vector<Mat>* corr_s,
                         const std::vector<Mat>* corr_z, Vec& dy, std::vector<Mat>& ds,
                         std::vector<Mat>& dz) {
      std::vector<Mat> base(nb);
      Vec rhs = -rd;
      for (std::size_t b = 0; b < nb; ++b) {
        base[b] = sigma * mu * sinv[b] - z[b] - sinv[b] * rp[b] * z[b];
        if (corr_s != nullptr) base[b] -= sinv[b] * (*corr_s)[b] * (*corr_z)[b];
        apply_operator(d.blocks[b], base[b], rhs);
      }
      for (int k = 0; k < d.m; ++k) {
        if (uses[static_cast<std::size_t>(k)] == 0) rhs(k) = 0.0;
      }
      dy = hchol.solve(rhs);
      ds.resize(nb);
      dz.resize(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        ds[b] = mat::symmetrize(apply_adjoint(d.blocks[b], dy) + rp[b]);
        dz[b] = mat::symmetrize(base[b] - sinv[b] * (ds[b] - rp[b]) * z[b]);
      }
    };
    auto steps = [&](const std::vector<Mat>& ds, const std::vector<Mat>& dz) {
      double ap = std::numeric_limits<double>::infinity();
      double ad = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < nb; ++b) {
        ap = std::min(ap, max_step(schol[b], ds[b]));
        ad = std::min(ad, max_step(zchol[b], dz[b]));
      }
      return std::pair<double, double>{ap, ad};
    };

    Vec dy;
    std::vector<Mat> ds;
    std::vector<Mat> dz;
    direction(0.0, nullptr, nullptr, dy, ds, dz);
    auto [ap_aff, ad_aff] = steps(ds, dz);
    ap_aff = std::min(1.0, ap_aff);
    ad_aff = std::min(1.0, ad_aff);
    double sz_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      sz_aff += ((s[b] + ap_aff * ds[b]).cwiseProduct(z[b] + ad_aff * dz[b])).sum();
    }
    const double mu_aff = sz_aff / static_cast<double>(total_n);
    double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
    const std::vector<Mat> ds_aff = ds;
    const std::vector<Mat> dz_aff = dz;
    direction(sigma, &ds_aff, &dz_aff, dy, ds, dz);
    auto [ap, ad] = steps(ds, dz);
    const double tau = 0.98;
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    if (opts.verbose) {
      std::fprintf(stderr, "   ap %.3e ad %.3e sigma %.3e aff %.3e %.3e\n", ap, ad, sigma, ap_aff, ad_aff);
    }
    if (ap < 1e-10 && ad < 1e-10) {
      if (++stalls > 3) return out;
    } else {
      stalls = 0;
    }
    y += ap * dy;
    for (std::size_t b = 0; b < nb; ++b) {
      s[b] = mat::symmetrize(s[b] + ap * ds[b]);
      z[b] = mat::symmetrize(z[b] + ad * dz[b]);
    }
  }
  out.iterations = opts.max_iters;
  return out;
}

double block_margin(const LmiData& d, const Vec& y) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& b : d.blocks) {
    margin = std::min(margin, mat::min_eigenvalue(b.f0 + apply_adjoint(b, y)));
  }
  return d.blocks.empty() ? 0.0 : margin;
}

// min s  s.t.  F_b(y) + s I >= 0,  s >= -1,  |y_k| <= box.
LmiData phase_one(const LmiData& d, double box) {
  LmiData p;
  p.m = d.m + 1;
  const int s_index = d.m;
  p.c = Vec::Zero(p.m);
  p.c(s_index) = 1.0;
  for (const auto& b : d.blocks) {
    BlockData nb = b;
    std::vector<Triplet> eye;
    for (Eigen::Index i = 0; i < b.n; ++i) eye.push_back({i, i, 1.0});
    nb.vars.push_back(s_index);
    nb.coeffs.push_back(std::move(eye));
    p.blocks.push_back(std::move(nb));
  }
  auto scalar_block = [](double f0, int k, double coeff) {
    BlockData bd;
    bd.n = 1;
    bd.f0 = Mat::Constant(1, 1, f0);
    bd.vars = {k};
    bd.coeffs = {{Triplet{0, 0, coeff}}};
    return bd;
  };
  p.blocks.push_back(scalar_block(1.0, s_index, 1.0));
  for (int k = 0; k < d.m; ++k) {
    p.blocks.push_back(scalar_block(box, k, 1.0));
    p.blocks.push_back(scalar_block(box, k, -1.0));
  }
  return p;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, const SolverOptions& opts) {
  if (!(opts.tol > 0.0) || opts.max_iters <= 0) {
    throw InputError("solve: tolerance and iteration limit must be positive");
  }
  problem.check_well_formed();
  const LmiData full = lower(problem);
  SdpSolution sol;

  if (full.m == 0) {
    const LmiData& d = full;
    sol.y.clear();
    sol.objective = d.c0;
    sol.dual_objective = d.c0;
    sol.min_block_eigenvalue = block_margin(d, Vec());
    sol.status = sol.min_block_eigenvalue >= -opts.tol ? SdpStatus::optimal : SdpStatus::infeasible;
    return sol;
  }

  const std::vector<int> keep = independent_scalars(full);
  const LmiData d = restrict_to(full, keep);
  auto finish = [&](const CoreResult& r, SdpStatus status, int extra_iters) {
    Vec y = Vec::Zero(full.m);
    for (int i = 0; i < d.m; ++i) y(keep[static_cast<std::size_t>(i)]) = r.y(i);
    sol.status = status;
    sol.y.assign(y.data(), y.data() + full.m);
    sol.objective = full.c.dot(y) + full.c0;
    sol.dual_objective = r.dobj;
    sol.min_block_eigenvalue = block_margin(full, y);
    sol.iterations = r.iterations + extra_iters;
    return sol;
  };

  CoreOptions core;
  core.tol = opts.tol;
  core.max_iters = opts.max_iters;
  core.verbose = opts.verbose;
  const CoreResult direct = interior_point(d, Vec::Zero(d.m), core);
  if (direct.converged) return finish(direct, SdpStatus::optimal, 0);

  // Decide strict feasibility with a bounded auxiliary problem: the optimal
  // s is minus the best achievable block margin.
  const LmiData p = phase_one(d, opts.feasibility_box);
  Vec start = Vec::Zero(p.m);
  start(d.m) = std::max(0.0, -block_margin(d, Vec::Zero(d.m))) + 1.0;
  CoreOptions core1 = core;
  core1.early_index = d.m;
  core1.early_value = -1e-3;
  const CoreResult one = interior_point(p, start, core1);
  const double feasible_below = -10.0 * opts.tol;
  if (!one.converged) return finish(direct, SdpStatus::max_iters, one.iterations);
  if (one.y(d.m) >= feasible_below) {
    CoreResult r = one;
    r.y = one.y.head(d.m);
    return finish(r, SdpStatus::infeasible, direct.iterations);
  }

  const CoreResult warm = interior_point(d, one.y.head(d.m), core);
  return finish(warm, warm.converged ? SdpStatus::optimal : SdpStatus::max_iters,
                direct.iterations + one.iterations);
}

}  // namespace layersynth::conic
