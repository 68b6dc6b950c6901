#pragma once

#include "dopf/coupling.hpp"
#include "dopf/network_subproblem.hpp"
#include "dopf/prosumer_subproblem.hpp"

#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

struct AdmmConfig {
  double eps_abs = 1e-3;
  double eps_rel = 1e-2;
  double tau_incr = 1.15;
  double tau_decr = 0.9;
  double mu_incr = 1.0 / 1.15;
  double mu_decr = 1.15;
  double rho_init = 1.0;
  int max_iter = 150;
  FairnessMode mode = FairnessMode::kNone;
  NetworkWeights weights;
  Execution execution = Execution::kParallel;
  nlp::SolverOptions nlp;
  bool verify = false;         // post-hoc checks on every network solve
  std::string trace_dir;       // per-iteration network dumps when set

  /// Residual-balancing thresholds used with each fairness mode:
  /// 1/0.8 and 0.8 for egalitarian, 1/1.15 and 1.15 otherwise.
  static AdmmConfig for_mode(FairnessMode mode);
  void validate() const;
};

/// Prosumer-side copies gathered from the replies, [h][t].
struct ProsumerCopies {
  Block p, y, q;
  static ProsumerCopies zero(int H, int T);
  static ProsumerCopies from_replies(const std::vector<ProsumerReply>& replies);
};

struct Residuals {
  Block r_p, r_y, r_q;  // network copy minus prosumer copy
  Block s_p, s_y, s_q;  // rho times change of the prosumer copy
};

struct ResidualNorms {
  double r_p = 0, r_y = 0, r_q = 0;
  double s_p = 0, s_y = 0, s_q = 0;
  double r() const;
  double s() const;
};

double norm2(const Block& b);
ResidualNorms norms_of(const Residuals& r);

Residuals compute_residuals(const NetworkDecision& net, const ProsumerCopies& now, const ProsumerCopies& before,
                            const Penalties& rho);

struct Tolerances {
  double pri = 0.0;
  double dual = 0.0;
};

/// sqrt(3HT) eps_abs plus eps_rel times the norm of the concatenated blocks.
Tolerances compute_tolerances(const NetworkDecision& net, const ProsumerCopies& now, const Block& lambda_p,
                              const Block& lambda_y, const Block& lambda_q, const AdmmConfig& cfg);

struct Multipliers {
  Block p, y, q;
  static Multipliers zero(int H, int T);
};

/// lambda += rho * (network copy - prosumer copy), per block.
void dual_update(Multipliers& lambda, const Penalties& rho, const NetworkDecision& net, const ProsumerCopies& now);

/// Residual balancing, each block independently.
Penalties rho_update(const Penalties& rho, const ResidualNorms& n, const AdmmConfig& cfg);

struct IterationLog {
  int k = 0;
  ResidualNorms norms;
  Penalties rho;  // penalties in force during iteration k
  double eps_pri = 0.0;
  double eps_dual = 0.0;
  double network_seconds = 0.0;
  double prosumer_seconds = 0.0;      // wall time of the prosumer stage
  double slowest_prosumer_seconds = 0.0;
};

/// Accumulated size of the messages exchanged, in numbers sent.
struct PayloadStats {
  long long to_prosumers = 0;
  long long to_aggregator = 0;
};

struct AdmmReport {
  bool converged = false;
  int iterations = 0;
  std::vector<IterationLog> history;
  NetworkDecision network;
  NetworkObjective network_objective;
  ProsumerCopies copies;
  ProsumerCopies previous;  // copies from the iteration before the last
  Multipliers lambda;
  Penalties rho;
  PayloadStats payload;
  double seconds = 0.0;
  double parallel_seconds = 0.0;  // network time plus the slowest prosumer, summed over iterations
};

class AdmmError : public std::runtime_error {
 public:
  AdmmError(const std::string& what, std::shared_ptr<AdmmReport> partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const AdmmReport* partial() const { return partial_.get(); }

 private:
  std::shared_ptr<AdmmReport> partial_;
};

/// Aggregator loop. Each iteration: network solve, message to each
/// prosumer, prosumer replies, residuals, dual update, termination test,
/// penalty update. Non-convergence is reported through the flag; a failing
/// subproblem raises AdmmError carrying the iterations completed so far.
AdmmReport run_admm(const NetworkModel& model, const std::vector<ProsumerEndpoint*>& prosumers, const AdmmConfig& cfg);

void write_residual_header(std::ostream& out);
void write_residual_line(std::ostream& out, const IterationLog& log);

}  // namespace dopf
