#pragma once

#include "dopf/feeder.hpp"

#include <vector>

namespace dopf {

/// Net bus injections P_i, Q_i (per unit) for polar voltages v, theta.
void bus_injections(const BusAdmittance& y, const std::vector<double>& v, const std::vector<double>& theta,
                    std::vector<double>& p, std::vector<double>& q);

struct PowerFlowResult {
  std::vector<double> v;
  std::vector<double> theta;
  double p_slack = 0.0;  // per unit, injected at bus 0
  double q_slack = 0.0;
  int iterations = 0;
  bool converged = false;
  double mismatch = 0.0;
};

/// Newton-Raphson load flow with bus 0 as slack (1 p.u., angle 0) and every
/// other bus PQ. p_inj/q_inj are specified net injections per bus in per
/// unit; entries for bus 0 are ignored.
PowerFlowResult solve_power_flow(const FeederSpec& spec, const std::vector<double>& p_inj,
                                 const std::vector<double>& q_inj, double tol = 1e-10, int max_iter = 50);

}  // namespace dopf
