#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them call into the solver stack except where
// noted (the central OPF uses the NLP kernel on a problem written here).

#include "dopf/feeder.hpp"
#include "dopf/nlp.hpp"
#include "dopf/prosumer.hpp"
#include "dopf/vvc.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace oracle {

/// Five-case Volt-Var transcription, written case by case.
double vvc_transcription(const dopf::VvcCurve& c, double v);

/// Counts of failures over `points` random voltages on random curves
/// (mismatch against the transcription, Lipschitz violations, increases).
struct VvcSuite {
  int mismatches = 0;
  int jumps = 0;
  int rises = 0;
  int range_errors = 0;
  bool ok() const { return mismatches + jumps + rises + range_errors == 0; }
};
VvcSuite run_vvc_suite(int points, unsigned seed);

/// Uniform export cap by enumeration of breakpoints: returns the level L with
/// sum max(a_h - L, 0) = shed and the resulting curtailment per household.
struct WaterFill {
  double level = 0.0;
  std::vector<double> curtail;
};
WaterFill water_fill(const std::vector<double>& available, double shed);

/// Least energy cost of one household over a battery power grid with the
/// given step; PV is used as fully as the exchange limits allow. Requires
/// unit efficiencies and no coupling; T small.
double prosumer_grid_cost(const dopf::ProsumerSpec& spec, const dopf::HorizonSpec& horizon, double step);

/// Receiving-end voltage of a two-bus feeder with unit sending voltage, by
/// the closed-form quartic in |V|. `load` is consumption in per unit.
std::complex<double> two_bus_voltage(std::complex<double> z_pu, std::complex<double> load);

/// Direct solve of the whole coordination problem (generation cost plus
/// household energy costs, AC flow, household constraints, reactive output
/// fixed at zero). Returns the objective and the solver status.
struct CentralResult {
  double objective = 0.0;
  bool optimal = false;
  dopf::nlp::Status status = dopf::nlp::Status::kNumericalError;
  std::vector<double> p_g;  // kW per t
};
CentralResult central_opf(const dopf::FeederSpec& feeder, const std::vector<dopf::ProsumerSpec>& prosumers,
                          const dopf::HorizonSpec& horizon);

// The same centralized problem, exposed for derivative checks.
std::unique_ptr<dopf::nlp::NlpProblem> make_central_problem(const dopf::FeederSpec& feeder,
                                                            const std::vector<dopf::ProsumerSpec>& prosumers,
                                                            const dopf::HorizonSpec& horizon);

/// Largest relative error |H - H_fd| / max(1, |H|) between the analytic
/// Lagrangian Hessian and central differences of the Lagrangian gradient.
double check_hessian(const dopf::nlp::NlpProblem& p, const dopf::nlp::Vector& x, const dopf::nlp::Vector& y_eq,
                     const dopf::nlp::Vector& y_ineq, double h = 1e-6);

}  // namespace oracle
