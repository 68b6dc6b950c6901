#include "dopf/vvc.hpp"

#include <cmath>
#include <string>

namespace dopf {

void VvcCurve::validate() const {
  if (!(v1 < v2 && v2 <= v3 && v3 < v4)) throw std::invalid_argument("vvc: breakpoints must satisfy v1 < v2 <= v3 < v4");
  if (!(q_max > 0)) throw std::invalid_argument("vvc: q_max must be positive");
}

double evaluate(const VvcCurve& c, double v) {
  if (v <= c.v1) return c.q_max;
  if (v < c.v2) return c.q_max * (c.v2 - v) / (c.v2 - c.v1);
  if (v <= c.v3) return 0.0;
  if (v < c.v4) return -c.q_max * (v - c.v3) / (c.v4 - c.v3);
  return -c.q_max;
}

std::vector<std::vector<double>> evaluate_all(const std::vector<VvcCurve>& curves,
                                              const std::vector<std::vector<double>>& v_pu,
                                              double base_voltage) {
  if (curves.size() != v_pu.size())
    throw std::invalid_argument("vvc: " + std::to_string(curves.size()) + " curves for " + std::to_string(v_pu.size()) + " voltage rows");
  std::vector<std::vector<double>> q(v_pu.size());
  const std::size_t cols = v_pu.empty() ? 0 : v_pu.front().size();
  for (std::size_t h = 0; h < v_pu.size(); ++h) {
    if (v_pu[h].size() != cols) throw std::invalid_argument("vvc: ragged voltage block at row " + std::to_string(h));
    q[h].resize(cols);
    for (std::size_t t = 0; t < cols; ++t) q[h][t] = evaluate(curves[h], v_pu[h][t] * base_voltage);
  }
  return q;
}

}  // namespace dopf
