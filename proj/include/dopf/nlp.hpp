#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf::nlp {

using Vector = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInfinity = 1e20;

/// Smooth constrained program
///
///   minimize f(x)  subject to  c(x) = 0,  g(x) <= 0,  lower <= x <= upper.
///
/// Bounds at or beyond +/-kInfinity are treated as absent. A variable whose
/// lower and upper bounds coincide is held fixed and removed from the
/// Newton system.
///
/// Jacobian and Hessian callbacks append triplets; duplicates are summed.
/// The set of (row, col) positions emitted must not depend on x so the
/// symbolic factorization can be reused across iterations.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_vars() const = 0;
  virtual int num_eq() const { return 0; }
  virtual int num_ineq() const { return 0; }

  virtual void bounds(Vector& lower, Vector& upper) const;
  virtual Vector start_point() const = 0;

  virtual double objective(const Vector& x) const = 0;
  virtual void gradient(const Vector& x, Vector& grad) const = 0;

  virtual void eq_values(const Vector& x, Vector& c) const;
  virtual void eq_jacobian(const Vector& x, std::vector<Triplet>& jac) const;
  virtual void ineq_values(const Vector& x, Vector& g) const;
  virtual void ineq_jacobian(const Vector& x, std::vector<Triplet>& jac) const;

  /// When true, hessian() supplies the lower triangle (row >= col) of
  ///   obj_factor * d2f + sum_i y_eq[i] * d2c_i + sum_j y_ineq[j] * d2g_j.
  virtual bool has_hessian() const { return false; }
  virtual void hessian(const Vector& x, double obj_factor, const Vector& y_eq,
                       const Vector& y_ineq, std::vector<Triplet>& hess) const;
};

/// kAcceptable: the run failed to reach `tol` but its best iterate met
/// `acceptable_tol`; that iterate is returned.
enum class Status { kOptimal, kAcceptable, kMaxIter, kInfeasibleDetected, kNumericalError };

std::string to_string(Status status);

enum class HessianMode {
  kAuto,   // exact when the problem provides it, BFGS otherwise
  kExact,
  kBfgs,
};

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = 300;
  double acceptable_tol = 1e-6;  // 0 disables the fallback
  double mu0 = 0.1;
  /// Relative push of the start point into the interior of its bounds.
  double bound_push = 1e-2;
  HessianMode hessian = HessianMode::kAuto;
  /// When set, one line per iteration is written here.
  std::ostream* trace = nullptr;
};

/// Primal-dual point used to warm start a solve. Empty vectors are ignored.
struct WarmStart {
  Vector x;
  Vector y_eq;
  Vector y_ineq;
  Vector z_lower;
  Vector z_upper;
};

/// One accepted line-search step. Both merit values are evaluated with the
/// same barrier parameter and penalty weight, so after <= before.
struct MeritStep {
  double before = 0.0;
  double after = 0.0;
  double step = 0.0;
};

struct NlpSolution {
  Vector x;
  Vector y_eq;
  Vector y_ineq;
  Vector z_lower;
  Vector z_upper;
  double objective = 0.0;
  Status status = Status::kNumericalError;
  double kkt_residual = 0.0;
  int iterations = 0;
  std::vector<MeritStep> merit_trace;

  bool optimal() const { return status == Status::kOptimal; }
  bool usable() const { return status == Status::kOptimal || status == Status::kAcceptable; }
  WarmStart warm_start() const { return {x, y_eq, y_ineq, z_lower, z_upper}; }
};

/// Raised when a callback returns a non-finite value at an accepted iterate
/// or the problem dimensions are inconsistent.
class NlpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Primal-dual interior-point method with a logarithmic barrier, monotone
/// barrier reduction, fraction-to-the-boundary rule, l1-merit backtracking
/// line search with a second-order correction, and inertia-corrected sparse
/// LDL^T factorization of the regularized KKT system.
NlpSolution solve(const NlpProblem& problem, const SolverOptions& options = {},
                  const WarmStart* warm = nullptr);

/// Largest discrepancy between analytic first derivatives (objective
/// gradient, equality and inequality Jacobians) and central differences with
/// step h, measured as |a - fd| / max(1, |a|, |fd|).
double check_gradients(const NlpProblem& problem, const Vector& x, double h = 1e-6);

}  // namespace dopf::nlp
