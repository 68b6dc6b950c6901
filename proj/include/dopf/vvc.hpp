#pragma once

#include <stdexcept>
#include <vector>

namespace dopf {

/// Piecewise-linear Volt-Var droop. Breakpoints in volts, q_max in kVAr.
/// Positive output is reactive power injected into the grid.
struct VvcCurve {
  double v1 = 216.0;
  double v2 = 225.0;
  double v3 = 244.0;
  double v4 = 253.0;
  double q_max = 0.0;

  /// Throws std::invalid_argument unless v1 < v2 <= v3 < v4 and q_max > 0.
  void validate() const;
};

/// Reactive output at terminal voltage `volts`.
double evaluate(const VvcCurve& curve, double volts);

/// Elementwise evaluation of a per-unit voltage block v[h][t]; one curve per row.
std::vector<std::vector<double>> evaluate_all(const std::vector<VvcCurve>& curves,
                                              const std::vector<std::vector<double>>& v_pu,
                                              double base_voltage);

}  // namespace dopf
