#pragma once

#include "dopf/coupling.hpp"
#include "dopf/feeder.hpp"
#include "dopf/nlp.hpp"
#include "dopf/prosumer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dopf {

struct NetworkWeights {
  double alpha = 75.0;
  double beta = 5.0;
  double gamma = 1e-6;
};

/// Aggregator-side view of the prosumer variables at iteration k.
struct CouplingSnapshot {
  Block p, y, q;  // prosumer copies, kW / kVAr
  Block lambda_p, lambda_y, lambda_q;
  Penalties rho;
  Block q_hat_prev;                 // network copy of q from iteration k
  std::vector<double> y_floor_prev; // uniform export floor from iteration k

  static CouplingSnapshot initial(int H, int T);
  int num_prosumers() const { return static_cast<int>(p.size()); }
  int horizon() const { return p.empty() ? 0 : static_cast<int>(p.front().size()); }
  /// p^- = max(-p, 0)
  double export_of(int h, int t) const { return p[h][t] < 0 ? -p[h][t] : 0.0; }
  /// Right-hand side of the curtailment cap: p^{-,k} + y^k.
  double headroom(int h, int t) const { return export_of(h, t) + y[h][t]; }
  void validate(int H, int T) const;
};

/// Immutable network data shared by every network solve.
struct NetworkModel {
  FeederSpec feeder;
  BusAdmittance admittance;
  std::vector<ProsumerRegistration> prosumers;  // index h = id - 1
  HorizonSpec horizon;

  NetworkModel(FeederSpec feeder, std::vector<ProsumerRegistration> prosumers, HorizonSpec horizon);
  int num_buses() const { return feeder.num_buses(); }
  int num_prosumers() const { return static_cast<int>(prosumers.size()); }
};

std::vector<ProsumerRegistration> register_prosumers(const FeederSpec& feeder, const std::vector<ProsumerSpec>& specs);

/// The aggregator problem for a single interval. Intervals couple only
/// through the coupling data, so the multiperiod problem is the sum of one
/// slice per interval.
class NetworkSlice : public nlp::NlpProblem {
 public:
  NetworkSlice(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode, const NetworkWeights& weights,
               int t);

  int num_vars() const override { return n_vars_; }
  int num_eq() const override { return 2 * nb_; }
  int num_ineq() const override { return static_cast<int>(rows_.size()); }
  void bounds(nlp::Vector& lo, nlp::Vector& up) const override;
  nlp::Vector start_point() const override;
  double objective(const nlp::Vector& x) const override;
  void gradient(const nlp::Vector& x, nlp::Vector& g) const override;
  void eq_values(const nlp::Vector& x, nlp::Vector& c) const override;
  void eq_jacobian(const nlp::Vector& x, std::vector<nlp::Triplet>& jac) const override;
  void ineq_values(const nlp::Vector& x, nlp::Vector& g) const override;
  void ineq_jacobian(const nlp::Vector& x, std::vector<nlp::Triplet>& jac) const override;
  bool has_hessian() const override { return true; }
  void hessian(const nlp::Vector& x, double obj_factor, const nlp::Vector& y_eq, const nlp::Vector& y_ineq,
               std::vector<nlp::Triplet>& hess) const override;

  // variable layout
  int v(int bus) const { return bus; }
  int theta(int bus) const { return nb_ + bus; }
  int pg_plus() const { return 2 * nb_; }
  int pg_minus() const { return 2 * nb_ + 1; }
  int qg() const { return 2 * nb_ + 2; }
  int p_hat(int h) const { return 2 * nb_ + 3 + h; }
  int y_hat(int h) const { return 2 * nb_ + 3 + nh_ + h; }
  int q_hat(int h) const { return 2 * nb_ + 3 + 2 * nh_ + h; }
  /// y_bar (egalitarian, proportional) or y_floor (uniform dynamic); -1 otherwise.
  int aux() const { return mode_ == FairnessMode::kNone ? -1 : 2 * nb_ + 3 + 3 * nh_; }

  struct Terms {
    double generation = 0.0;
    double coupling = 0.0;
    double damping = 0.0;
    double fairness = 0.0;  // alpha * Psi
  };
  Terms terms(const nlp::Vector& x) const;

  /// Prosumers whose fairness row is present, for post-hoc checks.
  const std::vector<int>& fairness_members() const { return members_; }
  /// Coefficient on y_hat in the proportional row.
  double proportional_coefficient(int h) const;

 private:
  struct Row {
    enum Kind { kCap, kFair } kind;
    int h;
  };

  const NetworkModel& model_;
  const CouplingSnapshot& snap_;
  FairnessMode mode_;
  NetworkWeights w_;
  int t_;
  int nb_, nh_, n_vars_;
  double s_base_;
  std::vector<int> bus_of_;       // prosumer -> bus
  std::vector<int> prosumer_at_;  // bus -> prosumer or -1
  std::vector<double> cap_;       // p^{-,k} + y^k
  double prop_k_ = 0.0;
  std::vector<int> members_;
  std::vector<Row> rows_;
};

struct NetworkDecision {
  Block v, theta;  // [bus][t], per unit and radians
  std::vector<double> p_g, q_g;  // kW / kVAr
  std::vector<double> p_g_plus, p_g_minus;
  Block p_hat, y_hat, q_hat;  // [h][t]
  FairnessMode mode = FairnessMode::kNone;
  std::vector<double> aux;  // y_bar (kW or ratio) or y_floor (kW) per t

  int horizon() const { return static_cast<int>(p_g.size()); }
  /// Voltage at each prosumer's bus, [h][t].
  Block prosumer_voltages(const NetworkModel& model) const;
};

struct NetworkObjective {
  double generation = 0.0;
  double coupling = 0.0;
  double damping = 0.0;
  double fairness = 0.0;
  double total() const { return generation + coupling + damping + fairness; }
};

struct NetworkSolveOptions {
  nlp::SolverOptions nlp;
  Execution execution = Execution::kParallel;
  bool verify = false;  // check fairness rows and the curtailment cap after the solve
};

struct NetworkSolveResult {
  NetworkDecision decision;
  NetworkObjective objective;
  double solver_objective = 0.0;  // sum of the per-slice optimal values
  std::vector<nlp::WarmStart> warm;  // one per interval
  int nlp_iterations = 0;
};

/// Solve every interval's slice; warm may be empty or hold one entry per t.
NetworkSolveResult solve_network(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                                 const NetworkWeights& weights, const std::vector<nlp::WarmStart>& warm = {},
                                 const NetworkSolveOptions& options = {});

/// Recompute the objective terms of a decision directly from the formulas.
NetworkObjective evaluate_network_objective(const NetworkModel& model, const CouplingSnapshot& snap,
                                            FairnessMode mode, const NetworkWeights& weights,
                                            const NetworkDecision& d);

/// Largest violation of the power balance rows at a decision, per unit.
double power_balance_residual(const NetworkModel& model, const CouplingSnapshot& snap, const NetworkDecision& d);

/// Largest violation of the curtailment cap and of the mode's fairness rows.
double fairness_violation(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                          const NetworkWeights& weights, const NetworkDecision& d);

/// CSV dump of v, theta, p_g and y_hat for one iteration.
void write_network_trace(std::ostream& out, const NetworkModel& model, const NetworkDecision& d);

}  // namespace dopf
