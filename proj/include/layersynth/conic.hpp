#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "layersynth/mat_core.hpp"

// Small dense semidefinite programs in LMI form:
//
//   minimize  c' y + c0   subject to  F_b(y) = F_b0 + sum_k y_k F_bk  >= 0
//
// for a list of symmetric blocks b. Decision matrices are declared on an
// SdpProblem and combined into affine matrix expressions.
namespace layersynth::conic {

// E(y) = constant + sum_k y_k * coeff_k, with k indexing scalar unknowns.
class AffineExpr {
 public:
  AffineExpr() = default;
  explicit AffineExpr(Mat constant);
  AffineExpr(Mat constant, std::map<int, Mat> terms);

  static AffineExpr zero(Eigen::Index rows, Eigen::Index cols);
  static AffineExpr scalar(double value);

  Eigen::Index rows() const { return constant_.rows(); }
  Eigen::Index cols() const { return constant_.cols(); }
  const Mat& constant() const { return constant_; }
  const std::map<int, Mat>& terms() const { return terms_; }

  AffineExpr transpose() const;
  AffineExpr trace() const;

  // Block matrix assembled from rows of expressions.
  static AffineExpr block(const std::vector<std::vector<AffineExpr>>& rows);

  Mat evaluate(std::span<const double> y) const;

  AffineExpr& operator+=(const AffineExpr& rhs);
  AffineExpr& operator-=(const AffineExpr& rhs);
  AffineExpr& operator*=(double s);

  friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
  friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
  friend AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
  friend AffineExpr operator*(const Mat& left, const AffineExpr& e);
  friend AffineExpr operator*(const AffineExpr& e, const Mat& right);

 private:
  Mat constant_;
  std::map<int, Mat> terms_;
};

struct Variable {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool symmetric = false;
  int offset = 0;  // first scalar index
  AffineExpr expr;
};

struct PsdBlock {
  std::string label;
  AffineExpr expr;
};

class SdpProblem {
 public:
  Variable add_symmetric(std::string name, Eigen::Index n);
  Variable add_matrix(std::string name, Eigen::Index rows, Eigen::Index cols);
  Variable add_scalar(std::string name);

  // The objective must be a 1x1 expression.
  void minimize(AffineExpr objective);
  // Adds `expr >= 0`. Throws InputError if the expression is not square or
  // not symmetric for every assignment.
  void require_psd(AffineExpr expr, std::string label);

  int num_scalars() const { return num_scalars_; }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<PsdBlock>& blocks() const { return blocks_; }
  const AffineExpr& objective() const { return objective_; }

  // Throws InputError when an expression references a scalar that was never
  // declared on this problem.
  void check_well_formed() const;

 private:
  int num_scalars_ = 0;
  std::vector<Variable> variables_;
  std::vector<PsdBlock> blocks_;
  AffineExpr objective_ = AffineExpr::scalar(0.0);
};

enum class SdpStatus { optimal, infeasible, max_iters };

std::string to_string(SdpStatus status);

struct SdpSolution {
  SdpStatus status = SdpStatus::max_iters;
  std::vector<double> y;
  double objective = 0.0;       // primal value at y
  double dual_objective = 0.0;  // lower bound when the dual residual vanishes
  double min_block_eigenvalue = 0.0;
  int iterations = 0;

  Mat value(const Variable& v) const;
  Mat evaluate(const AffineExpr& e) const { return e.evaluate(y); }
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iters = 150;
  // Box used by the strict-feasibility (phase one) search.
  double feasibility_box = 1e6;
  // Print one line per iteration to stderr.
  bool verbose = false;
};

// Primal-dual interior-point method (HKM direction, Mehrotra corrector).
// When the direct solve fails, a phase-one problem decides between
// `infeasible` (no strictly feasible point) and `max_iters`.
SdpSolution solve(const SdpProblem& problem, const SolverOptions& opts = {});

// Minimum over blocks of the smallest eigenvalue. Throws InputError on an
// asymmetric block.
double lmi_margin(std::span<const Mat> blocks);

}  // namespace layersynth::conic
