#include "dopf/power_flow.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace dopf {

void bus_injections(const BusAdmittance& y, const std::vector<double>& v, const std::vector<double>& theta,
                    std::vector<double>& p, std::vector<double>& q) {
  const std::size_t n = y.rows.size();
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : y.rows[i]) {
      const double d = theta[i] - theta[e.col];
      const double c = std::cos(d), s = std::sin(d);
      p[i] += v[i] * v[e.col] * (e.g * c + e.b * s);
      q[i] += v[i] * v[e.col] * (e.g * s - e.b * c);
    }
  }
}

PowerFlowResult solve_power_flow(const FeederSpec& spec, const std::vector<double>& p_inj,
                                 const std::vector<double>& q_inj, double tol, int max_iter) {
  const int n = spec.num_buses();
  if (static_cast<int>(p_inj.size()) != n || static_cast<int>(q_inj.size()) != n)
    throw FeederError("power flow: injection vectors must have one entry per bus");
  const BusAdmittance y = build_admittance(spec);
  PowerFlowResult res;
  res.v.assign(n, 1.0);
  res.theta.assign(n, 0.0);
  const int m = n - 1;
  // unknown layout: theta_1..theta_{n-1}, v_1..v_{n-1}
  Eigen::MatrixXd jac(2 * m, 2 * m);
  Eigen::VectorXd mis(2 * m);
  std::vector<double> p, q;
  for (int it = 0; it <= max_iter; ++it) {
    bus_injections(y, res.v, res.theta, p, q);
    for (int i = 1; i < n; ++i) {
      mis(i - 1) = p_inj[i] - p[i];
      mis(m + i - 1) = q_inj[i] - q[i];
    }
    res.mismatch = mis.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (!std::isfinite(res.mismatch)) break;
    if (res.mismatch <= tol) {
      res.converged = true;
      break;
    }
    if (it == max_iter) break;
    jac.setZero();
    for (int i = 1; i < n; ++i) {
      const int ri = i - 1;
      for (const auto& e : y.rows[i]) {
        const int j = e.col;
        if (j == i) {
          // diagonal terms collect contributions of every neighbour
          jac(ri, m + ri) += 2 * res.v[i] * e.g;
          jac(m + ri, m + ri) += -2 * res.v[i] * e.b;
          continue;
        }
        const double d = res.theta[i] - res.theta[j];
        const double c = std::cos(d), s = std::sin(d);
        const double hp = e.g * c + e.b * s;   // P term shape
        const double hq = e.g * s - e.b * c;   // Q term shape
        const double vv = res.v[i] * res.v[j];
        // dP_i
        jac(ri, ri) += vv * (-e.g * s + e.b * c);
        jac(ri, m + ri) += res.v[j] * hp;
        // dQ_i
        jac(m + ri, ri) += vv * (e.g * c + e.b * s);
        jac(m + ri, m + ri) += res.v[j] * hq;
        if (j == 0) continue;
        const int rj = j - 1;
        jac(ri, rj) += -vv * (-e.g * s + e.b * c);
        jac(ri, m + rj) += res.v[i] * hp;
        jac(m + ri, rj) += -vv * (e.g * c + e.b * s);
        jac(m + ri, m + rj) += res.v[i] * hq;
      }
    }
    const Eigen::VectorXd step = jac.partialPivLu().solve(mis);
    for (int i = 1; i < n; ++i) {
      res.theta[i] += step(i - 1);
      res.v[i] += step(m + i - 1);
    }
  }
  bus_injections(y, res.v, res.theta, p, q);
  res.p_slack = p[0];
  res.q_slack = q[0];
  return res;
}

}  // namespace dopf
