#include "dopf/prosumer_subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace dopf {

using nlp::Triplet;
using nlp::Vector;

ProsumerCoupling ProsumerCoupling::none(int T) {
  ProsumerCoupling c;
  c.p_hat.assign(T, 0.0);
  c.y_hat.assign(T, 0.0);
  c.lambda_p.assign(T, 0.0);
  c.lambda_y.assign(T, 0.0);
  c.q_fixed.assign(T, 0.0);
  c.rho_p = 0.0;
  c.rho_y = 0.0;
  return c;
}

ProsumerProblem::ProsumerProblem(const ProsumerSpec& spec, const HorizonSpec& horizon, const ProsumerCoupling& coupling)
    : spec_(spec), hz_(horizon), cp_(coupling), T_(horizon.T) {
  spec.validate(horizon);
  const std::string who = "prosumer " + std::to_string(spec.id) + ": ";
  for (const auto* v : {&cp_.p_hat, &cp_.y_hat, &cp_.lambda_p, &cp_.lambda_y, &cp_.q_fixed})
    if (static_cast<int>(v->size()) != T_) throw SubproblemError(who + "coupling length differs from the horizon");
  if (cp_.rho_p < 0 || cp_.rho_y < 0) throw SubproblemError(who + "negative penalty");
  for (int t = 0; t < T_; ++t)
    if (std::abs(cp_.q_fixed[t]) > spec.s_max + 1e-12)
      throw SubproblemError(who + "reactive set-point exceeds the inverter rating at t=" + std::to_string(t));
  coupled_ = cp_.active();
}

double ProsumerProblem::pv_ceiling(int t) const {
  const double q = cp_.q_fixed[t];
  const double room = std::sqrt(std::max(spec_.s_max * spec_.s_max - q * q, 0.0));
  return std::min(spec_.pv_avail[t], room);
}

void ProsumerProblem::bounds(Vector& lo, Vector& up) const {
  lo.setZero(num_vars());
  up.setZero(num_vars());
  const auto& bat = spec_.battery;
  for (int t = 0; t < T_; ++t) {
    up(index(t, kPlus)) = spec_.p_max;
    up(index(t, kMinus)) = std::min(-spec_.p_min, spec_.export_cap);
    up(index(t, kCh)) = bat.p_ch_max;
    up(index(t, kDis)) = bat.p_dis_max;
    lo(index(t, kSoc)) = t == T_ - 1 ? std::max(bat.soc_min, bat.soc_initial) : bat.soc_min;
    up(index(t, kSoc)) = bat.soc_max;
    up(index(t, kPv)) = pv_ceiling(t);
    up(index(t, kY)) = spec_.pv_avail[t];
  }
}

Vector ProsumerProblem::start_point() const {
  Vector x = Vector::Zero(num_vars());
  for (int t = 0; t < T_; ++t) {
    const double pv = pv_ceiling(t);
    const double net = spec_.demand[t] - pv;
    x(index(t, kPlus)) = std::max(net, 0.0);
    x(index(t, kMinus)) = std::max(-net, 0.0);
    x(index(t, kSoc)) = spec_.battery.soc_initial;
    x(index(t, kPv)) = pv;
    x(index(t, kY)) = spec_.pv_avail[t] - pv;
  }
  return x;
}

double ProsumerProblem::objective(const Vector& x) const {
  double f = 0.0;
  for (int t = 0; t < T_; ++t) {
    const double pp = x(index(t, kPlus)), pm = x(index(t, kMinus));
    f += hz_.dt * (spec_.tariff.tou(t) * pp - spec_.tariff.fit() * pm);
    if (!coupled_) continue;
    const double gp = cp_.p_hat[t] - (pp - pm);
    const double gy = cp_.y_hat[t] - x(index(t, kY));
    f += cp_.lambda_p[t] * gp + 0.5 * cp_.rho_p * gp * gp;
    f += cp_.lambda_y[t] * gy + 0.5 * cp_.rho_y * gy * gy;
  }
  return f;
}

void ProsumerProblem::gradient(const Vector& x, Vector& g) const {
  g.setZero(num_vars());
  for (int t = 0; t < T_; ++t) {
    double dp = 0.0, dy = 0.0;
    if (coupled_) {
      const double gp = cp_.p_hat[t] - (x(index(t, kPlus)) - x(index(t, kMinus)));
      const double gy = cp_.y_hat[t] - x(index(t, kY));
      dp = -cp_.lambda_p[t] - cp_.rho_p * gp;
      dy = -cp_.lambda_y[t] - cp_.rho_y * gy;
    }
    g(index(t, kPlus)) = hz_.dt * spec_.tariff.tou(t) + dp;
    g(index(t, kMinus)) = -hz_.dt * spec_.tariff.fit() - dp;
    g(index(t, kY)) = dy;
  }
}

// Rows per interval: meter balance, curtailment identity, SoC recursion.
void ProsumerProblem::eq_values(const Vector& x, Vector& c) const {
  c.resize(3 * T_);
  const auto& bat = spec_.battery;
  for (int t = 0; t < T_; ++t) {
    const double ch = x(index(t, kCh)), dis = x(index(t, kDis)), pv = x(index(t, kPv));
    c(3 * t) = x(index(t, kPlus)) - x(index(t, kMinus)) - ch + dis - spec_.demand[t] + pv;
    c(3 * t + 1) = x(index(t, kY)) + pv - spec_.pv_avail[t];
    const double prev = t == 0 ? bat.soc_initial : x(index(t - 1, kSoc));
    c(3 * t + 2) = x(index(t, kSoc)) - prev - (bat.eta_ch * ch - dis / bat.eta_dis) * hz_.dt;
  }
}

void ProsumerProblem::eq_jacobian(const Vector&, std::vector<Triplet>& jac) const {
  const auto& bat = spec_.battery;
  for (int t = 0; t < T_; ++t) {
    const int r = 3 * t;
    jac.emplace_back(r, index(t, kPlus), 1.0);
    jac.emplace_back(r, index(t, kMinus), -1.0);
    jac.emplace_back(r, index(t, kCh), -1.0);
    jac.emplace_back(r, index(t, kDis), 1.0);
    jac.emplace_back(r, index(t, kPv), 1.0);
    jac.emplace_back(r + 1, index(t, kY), 1.0);
    jac.emplace_back(r + 1, index(t, kPv), 1.0);
    jac.emplace_back(r + 2, index(t, kSoc), 1.0);
    if (t > 0) jac.emplace_back(r + 2, index(t - 1, kSoc), -1.0);
    jac.emplace_back(r + 2, index(t, kCh), -bat.eta_ch * hz_.dt);
    jac.emplace_back(r + 2, index(t, kDis), hz_.dt / bat.eta_dis);
  }
}

void ProsumerProblem::hessian(const Vector&, double s, const Vector&, const Vector&, std::vector<Triplet>& hess) const {
  if (!coupled_) return;
  for (int t = 0; t < T_; ++t) {
    hess.emplace_back(index(t, kPlus), index(t, kPlus), s * cp_.rho_p);
    hess.emplace_back(index(t, kMinus), index(t, kMinus), s * cp_.rho_p);
    hess.emplace_back(index(t, kMinus), index(t, kPlus), -s * cp_.rho_p);
    hess.emplace_back(index(t, kY), index(t, kY), s * cp_.rho_y);
  }
}

double energy_cost(const ProsumerSpec& spec, const HorizonSpec& horizon, const std::vector<double>& p_plus,
                   const std::vector<double>& p_minus) {
  double c = 0.0;
  for (int t = 0; t < horizon.T; ++t) c += horizon.dt * (spec.tariff.tou(t) * p_plus[t] - spec.tariff.fit() * p_minus[t]);
  return c;
}

namespace {

ProsumerDecision extract(const ProsumerSpec& spec, const HorizonSpec& hz, const ProsumerProblem& prob,
                         const ProsumerCoupling& cp, const Vector& x) {
  using P = ProsumerProblem;
  ProsumerDecision d;
  const int T = hz.T;
  for (auto* v : {&d.p, &d.p_plus, &d.p_minus, &d.p_bat, &d.p_ch, &d.p_dis, &d.soc, &d.p_pv, &d.y, &d.q}) v->resize(T);
  for (int t = 0; t < T; ++t) {
    d.p_ch[t] = std::clamp(x(P::index(t, P::kCh)), 0.0, spec.battery.p_ch_max);
    d.p_dis[t] = std::clamp(x(P::index(t, P::kDis)), 0.0, spec.battery.p_dis_max);
    d.p_bat[t] = d.p_ch[t] - d.p_dis[t];
    d.p_pv[t] = std::clamp(x(P::index(t, P::kPv)), 0.0, prob.pv_ceiling(t));
    d.y[t] = spec.pv_avail[t] - d.p_pv[t];
    d.p[t] = d.p_bat[t] + spec.demand[t] - d.p_pv[t];
    d.p_plus[t] = std::max(d.p[t], 0.0);
    d.p_minus[t] = std::max(-d.p[t], 0.0);
    d.soc[t] = x(P::index(t, P::kSoc));
    d.q[t] = cp.q_fixed[t];
  }
  d.energy_cost = energy_cost(spec, hz, d.p_plus, d.p_minus);
  return d;
}

}  // namespace

ProsumerSolve solve_prosumer(const ProsumerSpec& spec, const HorizonSpec& horizon, const ProsumerCoupling& coupling,
                             const nlp::WarmStart* warm) {
  const ProsumerProblem prob(spec, horizon, coupling);
  nlp::SolverOptions opt;
  opt.tol = 1e-8;
  nlp::NlpSolution sol;
  int iters = 0;
  bool ok = false;
  if (warm && warm->x.size() == prob.num_vars()) {
    nlp::SolverOptions o = opt;
    o.mu0 = 1e-3;
    o.bound_push = 1e-4;
    sol = nlp::solve(prob, o, warm);
    iters += sol.iterations;
    ok = sol.optimal();
  }
  if (!ok) {
    sol = nlp::solve(prob, opt);
    iters += sol.iterations;
  }
  if (!sol.optimal()) {
    nlp::NlpSolution prev = std::move(sol);
    opt.max_iter = 1000;
    sol = nlp::solve(prob, opt);
    iters += sol.iterations;
    if (!sol.usable() && prev.usable()) sol = std::move(prev);
  }
  if (!sol.usable()) {
    std::ostringstream msg;
    msg << "prosumer " << spec.id << ": scheduling problem ended with status " << nlp::to_string(sol.status)
        << " (kkt residual " << sol.kkt_residual << ")";
    throw SubproblemError(msg.str());
  }
  ProsumerSolve out;
  out.decision = extract(spec, horizon, prob, coupling, sol.x);
  out.warm = sol.warm_start();
  out.iterations = iters;
  return out;
}

std::vector<ProsumerSolve> solve_all(const std::vector<ProsumerSpec>& specs, const HorizonSpec& horizon,
                                     const std::vector<ProsumerCoupling>& couplings, Execution execution) {
  if (specs.size() != couplings.size()) throw SubproblemError("solve_all: one coupling per prosumer required");
  const int n = static_cast<int>(specs.size());
  std::vector<ProsumerSolve> out(n);
  std::vector<std::string> errors(n);
  const bool parallel = execution == Execution::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int h = 0; h < n; ++h) {
    try {
      out[h] = solve_prosumer(specs[h], horizon, couplings[h]);
    } catch (const std::exception& e) {
      errors[h] = e.what();
    }
  }
  std::string failed;
  for (const auto& e : errors)
    if (!e.empty()) failed += (failed.empty() ? "" : "; ") + e;
  if (!failed.empty()) throw SubproblemError("prosumer stage failed: " + failed);
  return out;
}

ProsumerAgent::ProsumerAgent(ProsumerSpec spec, HorizonSpec horizon, int bus, double base_voltage)
    : spec_(std::move(spec)), horizon_(horizon), bus_(bus), base_voltage_(base_voltage) {
  spec_.validate(horizon_);
}

ProsumerRegistration ProsumerAgent::registration() const {
  return {spec_.id, bus_, spec_.q_max, spec_.p_min, spec_.p_max};
}

ProsumerReply ProsumerAgent::exchange(const ProsumerInbox& in) {
  const int T = horizon_.T;
  if (in.id != spec_.id) throw SubproblemError("prosumer " + std::to_string(spec_.id) + ": message addressed to " + std::to_string(in.id));
  for (const auto* v : {&in.p_hat, &in.y_hat, &in.v, &in.lambda_p, &in.lambda_y})
    if (static_cast<int>(v->size()) != T) throw SubproblemError("prosumer " + std::to_string(spec_.id) + ": message length differs from the horizon");
  ProsumerCoupling cp;
  cp.p_hat = in.p_hat;
  cp.y_hat = in.y_hat;
  cp.lambda_p = in.lambda_p;
  cp.lambda_y = in.lambda_y;
  cp.rho_p = in.rho_p;
  cp.rho_y = in.rho_y;
  cp.q_fixed.resize(T);
  for (int t = 0; t < T; ++t) cp.q_fixed[t] = spec_.reactive(in.v[t], base_voltage_);
  last_ = solve_prosumer(spec_, horizon_, cp, warm_valid_ ? &last_.warm : nullptr);
  warm_valid_ = true;
  return {spec_.id, last_.decision.p, last_.decision.y, last_.decision.q};
}

ProsumerReply ProsumerAgent::solve_alone(const std::vector<double>& v) {
  ProsumerCoupling cp = ProsumerCoupling::none(horizon_.T);
  if (!v.empty()) {
    if (static_cast<int>(v.size()) != horizon_.T) throw SubproblemError("prosumer " + std::to_string(spec_.id) + ": voltage length differs from the horizon");
    for (int t = 0; t < horizon_.T; ++t) cp.q_fixed[t] = spec_.reactive(v[t], base_voltage_);
  }
  last_ = solve_prosumer(spec_, horizon_, cp, nullptr);
  warm_valid_ = false;
  return {spec_.id, last_.decision.p, last_.decision.y, last_.decision.q};
}

}  // namespace dopf
