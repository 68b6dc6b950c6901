#include "dopf/nlp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace dopf::nlp {

void NlpProblem::bounds(Vector& lower, Vector& upper) const {
  lower.setConstant(num_vars(), -kInfinity);
  upper.setConstant(num_vars(), kInfinity);
}
void NlpProblem::eq_values(const Vector&, Vector& c) const { c.resize(0); }
void NlpProblem::eq_jacobian(const Vector&, std::vector<Triplet>&) const {}
void NlpProblem::ineq_values(const Vector&, Vector& g) const { g.resize(0); }
void NlpProblem::ineq_jacobian(const Vector&, std::vector<Triplet>&) const {}
void NlpProblem::hessian(const Vector&, double, const Vector&, const Vector&,
                         std::vector<Triplet>&) const {}

std::string to_string(Status status) {
  switch (status) {
    case Status::kOptimal: return "optimal";
    case Status::kAcceptable: return "acceptable";
    case Status::kMaxIter: return "max_iter";
    case Status::kInfeasibleDetected: return "infeasible_detected";
    case Status::kNumericalError: return "numerical_error";
  }
  return "unknown";
}

namespace {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

constexpr double kKappaEps = 10.0;
constexpr double kKappaMu = 0.2;
constexpr double kThetaMu = 1.5;
constexpr double kKappaSigma = 1e10;
constexpr double kScaleMax = 100.0;
constexpr double kArmijo = 1e-4;
constexpr double kDampOneSided = 1e-4;
constexpr double kDeltaC = 1e-9;

bool finite(const Vector& v) { return v.allFinite(); }

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& problem, const SolverOptions& options, const WarmStart* warm)
      : prob_(problem), opt_(options) {
    n_ = prob_.num_vars();
    me_ = prob_.num_eq();
    mi_ = prob_.num_ineq();
    if (n_ <= 0 || me_ < 0 || mi_ < 0) throw NlpError("nlp: invalid problem dimensions");
    m_ = me_ + mi_;

    Vector lo(n_), up(n_);
    prob_.bounds(lo, up);
    if (lo.size() != n_ || up.size() != n_) throw NlpError("nlp: bounds have wrong length");

    x_full_ = (warm && warm->x.size() == n_) ? warm->x : prob_.start_point();
    if (x_full_.size() != n_) throw NlpError("nlp: start point has wrong length");

    pos_.assign(n_, -1);
    for (int j = 0; j < n_; ++j) {
      if (lo(j) > up(j)) throw NlpError("nlp: lower bound above upper bound for variable " + std::to_string(j));
      const double width = up(j) - lo(j);
      if (width <= 1e-12 * std::max(1.0, std::abs(lo(j)))) {
        x_full_(j) = lo(j);
      } else {
        pos_[j] = static_cast<int>(free_.size());
        free_.push_back(j);
      }
    }
    nf_ = static_cast<int>(free_.size());
    N_ = nf_ + mi_;

    lo_.setConstant(N_, -kInfinity);
    up_.setConstant(N_, kInfinity);
    for (int k = 0; k < nf_; ++k) {
      lo_(k) = lo(free_[k]);
      up_(k) = up(free_[k]);
    }
    for (int j = 0; j < mi_; ++j) lo_(nf_ + j) = 0.0;
    has_lo_.resize(N_);
    has_up_.resize(N_);
    for (int k = 0; k < N_; ++k) {
      has_lo_[k] = lo_(k) > -kInfinity;
      has_up_[k] = up_(k) < kInfinity;
    }

    mu_ = opt_.mu0;
    init_point(warm);
  }

  NlpSolution run();

 private:
  void init_point(const WarmStart* warm);
  void scatter(const Vector& w) {
    for (int k = 0; k < nf_; ++k) x_full_(free_[k]) = w(k);
  }
  bool eval_merit_terms(const Vector& w, double& f, Vector& cons);
  void eval_derivatives();
  void build_jacobian(const Vector& x, SparseMatrix& jac) const;
  double barrier(const Vector& w) const;
  Vector barrier_gradient() const;
  double optimality_error(double mu) const;
  bool factorize(const std::vector<Triplet>& hess);
  Vector kkt_solve(const Vector& rhs) const;
  double fraction_to_boundary(const Vector& w, const Vector& dw, double tau) const;
  void collect_hessian(std::vector<Triplet>& out);
  void bfgs_update(const Vector& w_old, const Vector& grad_lag_old);
  Vector lagrangian_gradient_x() const;
  NlpSolution finish(Status status);
  NlpSolution finish_at(Status status);

  const NlpProblem& prob_;
  SolverOptions opt_;
  int n_ = 0, me_ = 0, mi_ = 0, m_ = 0, nf_ = 0, N_ = 0;
  std::vector<int> free_;
  std::vector<int> pos_;
  Vector x_full_;
  Vector lo_, up_;
  std::vector<char> has_lo_, has_up_;

  Vector w_, y_, zl_, zu_;
  double mu_ = 0.1;
  double nu_ = 1.0;

  double f_ = 0.0;
  Vector grad_;
  Vector cons_;
  SparseMatrix jac_;

  bool use_bfgs_ = false;
  Eigen::MatrixXd bfgs_;

  SparseMatrix kkt_;
  Ldlt ldlt_;
  bool analyzed_ = false;
  Eigen::Index kkt_nnz_ = -1;
  double delta_w_ = 0.0;
  double delta_w_last_ = 0.0;
  double delta_w_floor_ = 0.0;
  Vector sigma_;

  int iter_ = 0;
  std::vector<MeritStep> merit_trace_;
  double best_err_ = std::numeric_limits<double>::infinity();
  Vector best_w_, best_y_, best_zl_, best_zu_;
  std::vector<Triplet> scratch_;
};

void InteriorPoint::build_jacobian(const Vector& x, SparseMatrix& jac) const {
  std::vector<Triplet> raw;
  std::vector<Triplet> mapped;
  mapped.reserve(64);
  prob_.eq_jacobian(x, raw);
  for (const auto& t : raw) {
    const int col = pos_[t.col()];
    if (col >= 0) mapped.emplace_back(t.row(), col, t.value());
  }
  raw.clear();
  prob_.ineq_jacobian(x, raw);
  for (const auto& t : raw) {
    const int col = pos_[t.col()];
    if (col >= 0) mapped.emplace_back(me_ + t.row(), col, t.value());
  }
  for (int j = 0; j < mi_; ++j) mapped.emplace_back(me_ + j, nf_ + j, 1.0);
  jac.resize(m_, N_);
  jac.setFromTriplets(mapped.begin(), mapped.end());
}

bool InteriorPoint::eval_merit_terms(const Vector& w, double& f, Vector& cons) {
  scatter(w);
  f = prob_.objective(x_full_);
  cons.resize(m_);
  if (me_ > 0) {
    Vector c(me_);
    prob_.eq_values(x_full_, c);
    if (c.size() != me_) throw NlpError("nlp: equality values have wrong length");
    cons.head(me_) = c;
  }
  if (mi_ > 0) {
    Vector g(mi_);
    prob_.ineq_values(x_full_, g);
    if (g.size() != mi_) throw NlpError("nlp: inequality values have wrong length");
    cons.tail(mi_) = g + w.tail(mi_);
  }
  return std::isfinite(f) && finite(cons);
}

void InteriorPoint::eval_derivatives() {
  if (!eval_merit_terms(w_, f_, cons_)) {
    std::ostringstream msg;
    msg << "nlp: non-finite objective or constraint value at iteration " << iter_;
    throw NlpError(msg.str());
  }
  Vector g(n_);
  prob_.gradient(x_full_, g);
  if (g.size() != n_ || !finite(g)) {
    std::ostringstream msg;
    msg << "nlp: non-finite objective gradient at iteration " << iter_;
    throw NlpError(msg.str());
  }
  grad_.setZero(N_);
  for (int k = 0; k < nf_; ++k) grad_(k) = g(free_[k]);
  build_jacobian(x_full_, jac_);
  for (int k = 0; k < jac_.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(jac_, k); it; ++it)
      if (!std::isfinite(it.value())) {
        std::ostringstream msg;
        msg << "nlp: non-finite Jacobian entry (" << it.row() << ", " << it.col() << ") at iteration " << iter_;
        throw NlpError(msg.str());
      }
}

void InteriorPoint::init_point(const WarmStart* warm) {
  w_.resize(N_);
  for (int k = 0; k < nf_; ++k) {
    double v = x_full_(free_[k]);
    const double l = lo_(k), u = up_(k);
    const double push = opt_.bound_push;
    if (has_lo_[k] && has_up_[k]) {
      const double pl = std::min(push * std::max(1.0, std::abs(l)), push * (u - l));
      const double pu = std::min(push * std::max(1.0, std::abs(u)), push * (u - l));
      v = std::clamp(v, l + pl, u - pu);
    } else if (has_lo_[k]) {
      v = std::max(v, l + push * std::max(1.0, std::abs(l)));
    } else if (has_up_[k]) {
      v = std::min(v, u - push * std::max(1.0, std::abs(u)));
    }
    w_(k) = v;
  }
  scatter(w_);
  if (mi_ > 0) {
    Vector g(mi_);
    prob_.ineq_values(x_full_, g);
    if (g.size() != mi_ || !finite(g)) throw NlpError("nlp: non-finite inequality values at start point");
    for (int j = 0; j < mi_; ++j) w_(nf_ + j) = std::max(-g(j), opt_.bound_push);
  }

  y_.setZero(m_);
  zl_.setZero(N_);
  zu_.setZero(N_);
  for (int k = 0; k < N_; ++k) {
    if (has_lo_[k]) zl_(k) = 1.0;
    if (has_up_[k]) zu_(k) = 1.0;
  }
  if (warm) {
    if (warm->y_eq.size() == me_) y_.head(me_) = warm->y_eq;
    if (warm->y_ineq.size() == mi_) {
      y_.tail(mi_) = warm->y_ineq;
      for (int j = 0; j < mi_; ++j) zl_(nf_ + j) = std::max(warm->y_ineq(j), mu_);
    }
    if (warm->z_lower.size() == n_ && warm->z_upper.size() == n_) {
      for (int k = 0; k < nf_; ++k) {
        if (has_lo_[k]) zl_(k) = std::max(warm->z_lower(free_[k]), mu_);
        if (has_up_[k]) zu_(k) = std::max(warm->z_upper(free_[k]), mu_);
      }
    }
  }

  use_bfgs_ = opt_.hessian == HessianMode::kBfgs ||
              (opt_.hessian == HessianMode::kAuto && !prob_.has_hessian());
  if (opt_.hessian == HessianMode::kExact && !prob_.has_hessian())
    throw NlpError("nlp: exact Hessian requested but the problem does not provide one");
  if (use_bfgs_) bfgs_ = Eigen::MatrixXd::Identity(nf_, nf_);
}

double InteriorPoint::barrier(const Vector& w) const {
  double b = 0.0;
  for (int k = 0; k < N_; ++k) {
    if (has_lo_[k]) {
      b -= mu_ * std::log(w(k) - lo_(k));
      if (!has_up_[k]) b += kDampOneSided * mu_ * (w(k) - lo_(k));
    }
    if (has_up_[k]) {
      b -= mu_ * std::log(up_(k) - w(k));
      if (!has_lo_[k]) b += kDampOneSided * mu_ * (up_(k) - w(k));
    }
  }
  return b;
}

Vector InteriorPoint::barrier_gradient() const {
  Vector g = grad_;
  for (int k = 0; k < N_; ++k) {
    if (has_lo_[k]) {
      g(k) -= mu_ / (w_(k) - lo_(k));
      if (!has_up_[k]) g(k) += kDampOneSided * mu_;
    }
    if (has_up_[k]) {
      g(k) += mu_ / (up_(k) - w_(k));
      if (!has_lo_[k]) g(k) -= kDampOneSided * mu_;
    }
  }
  return g;
}

double InteriorPoint::optimality_error(double mu) const {
  const Vector dual = grad_ + jac_.transpose() * y_ - zl_ + zu_;
  const double dual_inf = N_ > 0 ? dual.lpNorm<Eigen::Infinity>() : 0.0;
  const double primal_inf = m_ > 0 ? cons_.lpNorm<Eigen::Infinity>() : 0.0;
  double compl_err = 0.0;
  double z_sum = 0.0;
  int n_bounds = 0;
  for (int k = 0; k < N_; ++k) {
    if (has_lo_[k]) {
      compl_err = std::max(compl_err, std::abs((w_(k) - lo_(k)) * zl_(k) - mu));
      z_sum += std::abs(zl_(k));
      ++n_bounds;
    }
    if (has_up_[k]) {
      compl_err = std::max(compl_err, std::abs((up_(k) - w_(k)) * zu_(k) - mu));
      z_sum += std::abs(zu_(k));
      ++n_bounds;
    }
  }
  const double y_sum = y_.lpNorm<1>();
  const double s_d = std::max(kScaleMax, (y_sum + z_sum) / std::max(1, m_ + n_bounds)) / kScaleMax;
  const double s_c = std::max(kScaleMax, z_sum / std::max(1, n_bounds)) / kScaleMax;
  return std::max({dual_inf / s_d, primal_inf, compl_err / s_c});
}

void InteriorPoint::collect_hessian(std::vector<Triplet>& out) {
  out.clear();
  if (use_bfgs_) {
    for (int c = 0; c < nf_; ++c)
      for (int r = c; r < nf_; ++r) out.emplace_back(r, c, bfgs_(r, c));
    return;
  }
  scratch_.clear();
  const Vector y_eq = y_.head(me_);
  const Vector y_in = y_.tail(mi_);
  prob_.hessian(x_full_, 1.0, y_eq, y_in, scratch_);
  for (const auto& t : scratch_) {
    const int r = pos_[t.row()];
    const int c = pos_[t.col()];
    if (r < 0 || c < 0) continue;
    if (!std::isfinite(t.value())) {
      std::ostringstream msg;
      msg << "nlp: non-finite Hessian entry at iteration " << iter_;
      throw NlpError(msg.str());
    }
    if (r >= c) out.emplace_back(r, c, t.value());
    else out.emplace_back(c, r, t.value());
  }
}

bool InteriorPoint::factorize(const std::vector<Triplet>& hess) {
  std::vector<Triplet> trip;
  trip.reserve(hess.size() + jac_.nonZeros() + N_ + m_);
  trip.insert(trip.end(), hess.begin(), hess.end());
  for (int k = 0; k < N_; ++k) trip.emplace_back(k, k, sigma_(k) + delta_w_);
  for (int k = 0; k < jac_.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(jac_, k); it; ++it)
      trip.emplace_back(N_ + it.row(), it.col(), it.value());
  for (int i = 0; i < m_; ++i) trip.emplace_back(N_ + i, N_ + i, -kDeltaC);
  kkt_.resize(N_ + m_, N_ + m_);
  kkt_.setFromTriplets(trip.begin(), trip.end());
  if (!analyzed_ || kkt_.nonZeros() != kkt_nnz_) {
    ldlt_.analyzePattern(kkt_);
    analyzed_ = true;
    kkt_nnz_ = kkt_.nonZeros();
  }
  ldlt_.factorize(kkt_);
  if (ldlt_.info() != Eigen::Success) return false;
  const Vector d = ldlt_.vectorD();
  int pos = 0, neg = 0;
  for (int i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d(i))) return false;
    if (d(i) > 0) ++pos;
    else if (d(i) < 0) ++neg;
  }
  return pos == N_ && neg == m_;
}

Vector InteriorPoint::kkt_solve(const Vector& rhs) const {
  Vector sol = ldlt_.solve(rhs);
  const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  for (int round = 0; round < 3; ++round) {
    const Vector resid = rhs - kkt_.selfadjointView<Eigen::Lower>() * sol;
    if (resid.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) break;
    sol += ldlt_.solve(resid);
  }
  return sol;
}

double InteriorPoint::fraction_to_boundary(const Vector& w, const Vector& dw, double tau) const {
  double alpha = 1.0;
  for (int k = 0; k < N_; ++k) {
    if (has_lo_[k] && dw(k) < 0) alpha = std::min(alpha, -tau * (w(k) - lo_(k)) / dw(k));
    if (has_up_[k] && dw(k) > 0) alpha = std::min(alpha, tau * (up_(k) - w(k)) / dw(k));
  }
  return alpha;
}

Vector InteriorPoint::lagrangian_gradient_x() const {
  Vector gl = grad_ + jac_.transpose() * y_;
  return gl.head(nf_);
}

void InteriorPoint::bfgs_update(const Vector& w_old, const Vector& grad_lag_old) {
  const Vector s = w_.head(nf_) - w_old.head(nf_);
  const Vector yv = lagrangian_gradient_x() - grad_lag_old;
  const double ss = s.squaredNorm();
  if (ss < 1e-24) return;
  const Vector bs = bfgs_ * s;
  const double sbs = s.dot(bs);
  if (sbs <= 0) return;
  double sy = s.dot(yv);
  Vector r = yv;
  if (sy < 0.2 * sbs) {
    const double theta = 0.8 * sbs / (sbs - sy);
    r = theta * yv + (1.0 - theta) * bs;
    sy = s.dot(r);
  }
  if (sy <= 1e-16) return;
  bfgs_ += (r * r.transpose()) / sy - (bs * bs.transpose()) / sbs;
}

NlpSolution InteriorPoint::finish(Status status) {
  if (status == Status::kOptimal || !(best_err_ <= opt_.acceptable_tol)) return finish_at(status);
  // fall back to the best point seen
  w_ = best_w_;
  y_ = best_y_;
  zl_ = best_zl_;
  zu_ = best_zu_;
  eval_derivatives();
  return finish_at(Status::kAcceptable);
}

NlpSolution InteriorPoint::finish_at(Status status) {
  NlpSolution sol;
  scatter(w_);
  sol.x = x_full_;
  sol.y_eq = y_.head(me_);
  sol.y_ineq = y_.tail(mi_);
  sol.z_lower.setZero(n_);
  sol.z_upper.setZero(n_);
  for (int k = 0; k < nf_; ++k) {
    sol.z_lower(free_[k]) = zl_(k);
    sol.z_upper(free_[k]) = zu_(k);
  }
  if (nf_ < n_) {
    // Multipliers of fixed variables from the reduced gradient.
    Vector g(n_);
    prob_.gradient(x_full_, g);
    Vector r = g;
    std::vector<Triplet> raw;
    prob_.eq_jacobian(x_full_, raw);
    for (const auto& t : raw) r(t.col()) += t.value() * y_(t.row());
    raw.clear();
    prob_.ineq_jacobian(x_full_, raw);
    for (const auto& t : raw) r(t.col()) += t.value() * y_(me_ + t.row());
    for (int j = 0; j < n_; ++j) {
      if (pos_[j] >= 0) continue;
      if (r(j) >= 0) sol.z_lower(j) = r(j);
      else sol.z_upper(j) = -r(j);
    }
  }
  sol.objective = prob_.objective(x_full_);
  sol.status = status;
  sol.kkt_residual = optimality_error(0.0);
  sol.iterations = iter_;
  sol.merit_trace = std::move(merit_trace_);
  return sol;
}

NlpSolution InteriorPoint::run() {
  eval_derivatives();
  std::vector<Triplet> hess;
  const double mu_min = opt_.tol / 10.0;
  int ls_failures = 0;

  while (true) {
    const double err0 = optimality_error(0.0);
    if (opt_.trace) {
      *opt_.trace << "iter " << iter_ << " f=" << f_ << " err=" << err0
                  << " inf_pr=" << (m_ > 0 ? cons_.lpNorm<Eigen::Infinity>() : 0.0)
                  << " mu=" << mu_ << " dw=" << delta_w_ << '\n';
    }
    if (err0 <= opt_.tol) return finish(Status::kOptimal);
    if (err0 < best_err_) {
      best_err_ = err0;
      best_w_ = w_;
      best_y_ = y_;
      best_zl_ = zl_;
      best_zu_ = zu_;
    }
    if (iter_ >= opt_.max_iter) return finish(Status::kMaxIter);

    while (mu_ > mu_min && optimality_error(mu_) <= kKappaEps * mu_) {
      mu_ = std::max(mu_min, std::min(kKappaMu * mu_, std::pow(mu_, kThetaMu)));
    }

    sigma_.setZero(N_);
    for (int k = 0; k < N_; ++k) {
      if (has_lo_[k]) sigma_(k) += zl_(k) / (w_(k) - lo_(k));
      if (has_up_[k]) sigma_(k) += zu_(k) / (up_(k) - w_(k));
    }
    collect_hessian(hess);

    // Inertia correction.
    bool ok = false;
    delta_w_ = delta_w_floor_;
    for (int attempt = 0; attempt < 60; ++attempt) {
      if (factorize(hess)) {
        ok = true;
        break;
      }
      if (delta_w_ == 0.0) {
        delta_w_ = delta_w_last_ == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last_ / 3.0);
      } else {
        delta_w_ *= delta_w_last_ == 0.0 ? 100.0 : 8.0;
      }
      if (delta_w_ > 1e40) break;
    }
    if (!ok) return finish(Status::kNumericalError);
    if (delta_w_ > 0.0) delta_w_last_ = delta_w_;

    const Vector gphi = barrier_gradient();
    Vector rhs(N_ + m_);
    rhs.head(N_) = -(gphi + jac_.transpose() * y_);
    rhs.tail(m_) = -cons_;
    Vector sol = kkt_solve(rhs);
    Vector dw = sol.head(N_);
    Vector dy = sol.tail(m_);
    if (!finite(dw) || !finite(dy)) return finish(Status::kNumericalError);

    Vector dzl = Vector::Zero(N_), dzu = Vector::Zero(N_);
    for (int k = 0; k < N_; ++k) {
      if (has_lo_[k]) {
        const double s = w_(k) - lo_(k);
        dzl(k) = mu_ / s - zl_(k) - zl_(k) / s * dw(k);
      }
      if (has_up_[k]) {
        const double s = up_(k) - w_(k);
        dzu(k) = mu_ / s - zu_(k) + zu_(k) / s * dw(k);
      }
    }

    const double tau = std::max(0.99, 1.0 - mu_);
    const double alpha_max = fraction_to_boundary(w_, dw, tau);
    double alpha_z = 1.0;
    for (int k = 0; k < N_; ++k) {
      if (has_lo_[k] && dzl(k) < 0) alpha_z = std::min(alpha_z, -tau * zl_(k) / dzl(k));
      if (has_up_[k] && dzu(k) < 0) alpha_z = std::min(alpha_z, -tau * zu_(k) / dzu(k));
    }

    // Penalty weight for the l1 merit.
    const double c_norm = m_ > 0 ? cons_.lpNorm<1>() : 0.0;
    const double gphi_dw = gphi.dot(dw);
    if (c_norm > 0.0) {
      Vector probe = Vector::Zero(N_ + m_);
      probe.head(N_) = dw;
      const Vector kp = kkt_.selfadjointView<Eigen::Lower>() * probe;
      const double curv = std::max(0.0, dw.dot(kp.head(N_)) - delta_w_ * dw.squaredNorm());
      const double nu_req = (gphi_dw + 0.5 * curv) / (0.9 * c_norm);
      const double nu_dual = (y_ + dy).lpNorm<Eigen::Infinity>();
      const double target = std::max(nu_req, nu_dual);
      if (nu_ < target) nu_ = target + 1.0;
    }
    const double dir_deriv = gphi_dw - nu_ * c_norm;
    const double merit0 = f_ + barrier(w_) + nu_ * c_norm;

    const Vector w_old = w_;
    Vector grad_lag_old;
    if (use_bfgs_) grad_lag_old = lagrangian_gradient_x();

    const double step_norm = dw.lpNorm<Eigen::Infinity>() / (1.0 + w_.lpNorm<Eigen::Infinity>());
    double alpha = alpha_max;
    bool accepted = false;
    Vector w_trial(N_);
    Vector c_trial;
    double f_trial = 0.0;
    double merit_trial = 0.0;
    if (step_norm < 1e-15) {
      accepted = true;
      w_trial = w_ + alpha * dw;
      if (!eval_merit_terms(w_trial, f_trial, c_trial)) accepted = false;
      merit_trial = f_trial + barrier(w_trial) + nu_ * (m_ > 0 ? c_trial.lpNorm<1>() : 0.0);
      merit_trial = std::min(merit_trial, merit0);
    }
    bool tried_soc = false;
    for (int ls = 0; !accepted && ls < 60; ++ls) {
      w_trial = w_ + alpha * dw;
      if (eval_merit_terms(w_trial, f_trial, c_trial)) {
        merit_trial = f_trial + barrier(w_trial) + nu_ * (m_ > 0 ? c_trial.lpNorm<1>() : 0.0);
        if (std::isfinite(merit_trial) && merit_trial <= merit0 + kArmijo * alpha * std::min(dir_deriv, 0.0)) {
          accepted = true;
          break;
        }
        if (!tried_soc && ls == 0 && m_ > 0) {
          tried_soc = true;
          Vector rhs_soc = rhs;
          rhs_soc.tail(m_) = -(alpha * cons_ + c_trial);
          const Vector soc = kkt_solve(rhs_soc);
          const Vector d_soc = soc.head(N_);
          if (finite(d_soc)) {
            const double a_soc = fraction_to_boundary(w_, d_soc, tau);
            Vector w_soc = w_ + a_soc * d_soc;
            double f_soc = 0.0;
            Vector c_soc;
            if (eval_merit_terms(w_soc, f_soc, c_soc)) {
              const double m_soc = f_soc + barrier(w_soc) + nu_ * c_soc.lpNorm<1>();
              if (std::isfinite(m_soc) && m_soc <= merit0 + kArmijo * alpha * std::min(dir_deriv, 0.0)) {
                w_trial = w_soc;
                merit_trial = m_soc;
                accepted = true;
                break;
              }
            }
          }
        }
      }
      alpha *= 0.5;
      if (alpha * dw.lpNorm<Eigen::Infinity>() < 1e-16 * (1.0 + w_.lpNorm<Eigen::Infinity>())) break;
    }

    if (!accepted) {
      ++ls_failures;
      if (ls_failures > 3) {
        const double inf_pr = m_ > 0 ? cons_.lpNorm<Eigen::Infinity>() : 0.0;
        return finish(inf_pr > std::sqrt(opt_.tol) ? Status::kInfeasibleDetected : Status::kNumericalError);
      }
      // Retry with a stiffer primal regularization.
      delta_w_floor_ = std::max(1e-2, delta_w_floor_ * 100.0);
      ++iter_;
      continue;
    }
    ls_failures = 0;
    delta_w_floor_ = 0.0;

    merit_trace_.push_back({merit0, merit_trial, alpha});
    w_ = w_trial;
    y_ += alpha * dy;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
    for (int k = 0; k < N_; ++k) {
      if (has_lo_[k]) {
        const double s = w_(k) - lo_(k);
        zl_(k) = std::clamp(zl_(k), mu_ / (kKappaSigma * s), kKappaSigma * mu_ / s);
      }
      if (has_up_[k]) {
        const double s = up_(k) - w_(k);
        zu_(k) = std::clamp(zu_(k), mu_ / (kKappaSigma * s), kKappaSigma * mu_ / s);
      }
    }
    ++iter_;
    eval_derivatives();
    if (use_bfgs_) bfgs_update(w_old, grad_lag_old);
  }
}

}  // namespace

NlpSolution solve(const NlpProblem& problem, const SolverOptions& options, const WarmStart* warm) {
  InteriorPoint ip(problem, options, warm);
  return ip.run();
}

double check_gradients(const NlpProblem& problem, const Vector& x, double h) {
  const int n = problem.num_vars();
  const int me = problem.num_eq();
  const int mi = problem.num_ineq();
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); };

  Vector grad(n);
  problem.gradient(x, grad);
  Eigen::MatrixXd jac_eq = Eigen::MatrixXd::Zero(me, n);
  Eigen::MatrixXd jac_in = Eigen::MatrixXd::Zero(mi, n);
  std::vector<Triplet> trip;
  problem.eq_jacobian(x, trip);
  for (const auto& t : trip) jac_eq(t.row(), t.col()) += t.value();
  trip.clear();
  problem.ineq_jacobian(x, trip);
  for (const auto& t : trip) jac_in(t.row(), t.col()) += t.value();

  double worst = 0.0;
  Vector xp = x, xm = x;
  Vector cp(me), cm(me), gp(mi), gm(mi);
  for (int j = 0; j < n; ++j) {
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    const double fd = (problem.objective(xp) - problem.objective(xm)) / (2 * h);
    worst = std::max(worst, rel(grad(j), fd));
    if (me > 0) {
      problem.eq_values(xp, cp);
      problem.eq_values(xm, cm);
      for (int i = 0; i < me; ++i) worst = std::max(worst, rel(jac_eq(i, j), (cp(i) - cm(i)) / (2 * h)));
    }
    if (mi > 0) {
      problem.ineq_values(xp, gp);
      problem.ineq_values(xm, gm);
      for (int i = 0; i < mi; ++i) worst = std::max(worst, rel(jac_in(i, j), (gp(i) - gm(i)) / (2 * h)));
    }
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return worst;
}

}  // namespace dopf::nlp
