#pragma once

#include "dopf/coupling.hpp"
#include "dopf/nlp.hpp"
#include "dopf/prosumer.hpp"

#include <memory>
#include <vector>

namespace dopf {

struct ProsumerCoupling {
  std::vector<double> p_hat, y_hat;
  std::vector<double> lambda_p, lambda_y;
  double rho_p = 1.0;
  double rho_y = 1.0;
  std::vector<double> q_fixed;  // VVC output for this iteration

  /// No coupling at all: the prosumer's selfish problem.
  static ProsumerCoupling none(int T);
  bool active() const { return rho_p > 0 || rho_y > 0; }
};

struct ProsumerDecision {
  std::vector<double> p, p_plus, p_minus;
  std::vector<double> p_bat, p_ch, p_dis;
  std::vector<double> soc;
  std::vector<double> p_pv, y, q;
  double energy_cost = 0.0;  // $ from tariffs only
};

/// Convex scheduling QP of one household over the horizon. Variables per
/// interval: p_plus, p_minus, p_ch, p_dis, soc, p_pv, y.
class ProsumerProblem : public nlp::NlpProblem {
 public:
  static constexpr int kStride = 7;
  enum Var { kPlus = 0, kMinus, kCh, kDis, kSoc, kPv, kY };

  ProsumerProblem(const ProsumerSpec& spec, const HorizonSpec& horizon, const ProsumerCoupling& coupling);

  int num_vars() const override { return kStride * T_; }
  int num_eq() const override { return 3 * T_; }
  void bounds(nlp::Vector& lo, nlp::Vector& up) const override;
  nlp::Vector start_point() const override;
  double objective(const nlp::Vector& x) const override;
  void gradient(const nlp::Vector& x, nlp::Vector& g) const override;
  void eq_values(const nlp::Vector& x, nlp::Vector& c) const override;
  void eq_jacobian(const nlp::Vector& x, std::vector<nlp::Triplet>& jac) const override;
  bool has_hessian() const override { return true; }
  void hessian(const nlp::Vector& x, double obj_factor, const nlp::Vector& y_eq, const nlp::Vector& y_ineq,
               std::vector<nlp::Triplet>& hess) const override;

  static int index(int t, Var v) { return kStride * t + v; }
  /// PV ceiling at t: min(available, sqrt(s_max^2 - q^2)).
  double pv_ceiling(int t) const;

 private:
  const ProsumerSpec& spec_;
  HorizonSpec hz_;
  const ProsumerCoupling& cp_;
  int T_;
  bool coupled_;
};

double energy_cost(const ProsumerSpec& spec, const HorizonSpec& horizon, const std::vector<double>& p_plus,
                   const std::vector<double>& p_minus);

struct ProsumerSolve {
  ProsumerDecision decision;
  nlp::WarmStart warm;
  int iterations = 0;
};

/// Throws SubproblemError (with the prosumer id) if the data are infeasible
/// or the kernel does not reach optimality.
ProsumerSolve solve_prosumer(const ProsumerSpec& spec, const HorizonSpec& horizon, const ProsumerCoupling& coupling,
                             const nlp::WarmStart* warm = nullptr);

/// Independent solves for every household; the order of execution has no
/// effect on the result.
std::vector<ProsumerSolve> solve_all(const std::vector<ProsumerSpec>& specs, const HorizonSpec& horizon,
                                     const std::vector<ProsumerCoupling>& couplings,
                                     Execution execution = Execution::kParallel);

/// Endpoint through which the aggregator talks to a household. The
/// aggregator sees only the registration and the reply.
class ProsumerEndpoint {
 public:
  virtual ~ProsumerEndpoint() = default;
  virtual ProsumerRegistration registration() const = 0;
  virtual ProsumerReply exchange(const ProsumerInbox& inbox) = 0;
};

/// Household agent: runs the VVC update and its scheduling QP on private
/// data and keeps its own warm start.
class ProsumerAgent : public ProsumerEndpoint {
 public:
  ProsumerAgent(ProsumerSpec spec, HorizonSpec horizon, int bus, double base_voltage);

  ProsumerRegistration registration() const override;
  ProsumerReply exchange(const ProsumerInbox& inbox) override;

  /// Selfish schedule with no coupling (uncoordinated operation); q is the
  /// VVC response to `v`, or zero when v is empty.
  ProsumerReply solve_alone(const std::vector<double>& v = {});

  /// Household-side record for reporting; never sent to the aggregator.
  const ProsumerDecision& schedule() const { return last_.decision; }
  const ProsumerSpec& spec() const { return spec_; }

 private:
  ProsumerSpec spec_;
  HorizonSpec horizon_;
  int bus_;
  double base_voltage_;
  ProsumerSolve last_;
  bool warm_valid_ = false;
};

}  // namespace dopf
