#include "dopf/network_subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <sstream>

namespace dopf {

using nlp::Triplet;
using nlp::Vector;

CouplingSnapshot CouplingSnapshot::initial(int H, int T) {
  CouplingSnapshot s;
  s.p = s.y = s.q = zero_block(H, T);
  s.lambda_p = s.lambda_y = s.lambda_q = zero_block(H, T);
  s.q_hat_prev = zero_block(H, T);
  s.y_floor_prev.assign(T, 0.0);
  return s;
}

void CouplingSnapshot::validate(int H, int T) const {
  auto check = [&](const Block& b, const char* name) {
    if (static_cast<int>(b.size()) != H) throw SubproblemError(std::string("coupling block ") + name + " has wrong row count");
    for (const auto& row : b)
      if (static_cast<int>(row.size()) != T) throw SubproblemError(std::string("coupling block ") + name + " has wrong length");
  };
  check(p, "p");
  check(y, "y");
  check(q, "q");
  check(lambda_p, "lambda_p");
  check(lambda_y, "lambda_y");
  check(lambda_q, "lambda_q");
  check(q_hat_prev, "q_hat_prev");
  if (static_cast<int>(y_floor_prev.size()) != T) throw SubproblemError("coupling: y_floor_prev has wrong length");
  if (!(rho.p > 0 && rho.y > 0 && rho.q > 0)) throw SubproblemError("coupling: penalties must be positive");
}

NetworkModel::NetworkModel(FeederSpec f, std::vector<ProsumerRegistration> regs, HorizonSpec hz)
    : feeder(std::move(f)), prosumers(std::move(regs)), horizon(hz) {
  validate(feeder);
  horizon.validate();
  admittance = build_admittance(feeder);
  const auto buses = feeder.prosumer_buses();
  if (prosumers.size() != buses.size()) throw SubproblemError("network model: registration count differs from feeder prosumers");
  for (std::size_t h = 0; h < prosumers.size(); ++h) {
    const auto& r = prosumers[h];
    if (r.id != static_cast<int>(h) + 1) throw SubproblemError("network model: registrations must be ordered by id");
    if (r.bus != buses[h]) throw SubproblemError("network model: prosumer " + std::to_string(r.id) + " registered at the wrong bus");
    if (r.q_max < 0 || r.p_min > r.p_max) throw SubproblemError("network model: bad limits for prosumer " + std::to_string(r.id));
  }
}

std::vector<ProsumerRegistration> register_prosumers(const FeederSpec& feeder, const std::vector<ProsumerSpec>& specs) {
  const auto buses = feeder.prosumer_buses();
  if (specs.size() != buses.size()) throw SubproblemError("prosumer count differs from feeder attachments");
  std::vector<ProsumerRegistration> out;
  for (std::size_t h = 0; h < specs.size(); ++h) {
    const auto& s = specs[h];
    if (s.id != static_cast<int>(h) + 1) throw SubproblemError("prosumer specs must be ordered by id starting at 1");
    out.push_back({s.id, buses[h], s.q_max, s.p_min, s.p_max});
  }
  return out;
}

NetworkSlice::NetworkSlice(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                           const NetworkWeights& weights, int t)
    : model_(model), snap_(snap), mode_(mode), w_(weights), t_(t) {
  nb_ = model.num_buses();
  nh_ = model.num_prosumers();
  if (t < 0 || t >= model.horizon.T) throw SubproblemError("network slice: interval out of range");
  if (!(w_.gamma > 0)) throw SubproblemError("network slice: gamma must be positive");
  if (w_.alpha < 0 || w_.beta < 0) throw SubproblemError("network slice: alpha and beta must be nonnegative");
  snap.validate(nh_, model.horizon.T);
  n_vars_ = 2 * nb_ + 3 + 3 * nh_ + (mode == FairnessMode::kNone ? 0 : 1);
  s_base_ = model.feeder.base_power;
  bus_of_.resize(nh_);
  prosumer_at_.assign(nb_, -1);
  cap_.resize(nh_);
  double cap_sum = 0.0, y_sum = 0.0;
  for (int h = 0; h < nh_; ++h) {
    bus_of_[h] = model.prosumers[h].bus;
    prosumer_at_[bus_of_[h]] = h;
    cap_[h] = snap.headroom(h, t);
    cap_sum += cap_[h];
    y_sum += snap.y[h][t];
  }
  prop_k_ = cap_sum > 0 ? y_sum / cap_sum : 0.0;

  for (int h = 0; h < nh_; ++h) rows_.push_back({Row::kCap, h});
  for (int h = 0; h < nh_; ++h) {
    bool member = false;
    switch (mode_) {
      case FairnessMode::kNone: break;
      case FairnessMode::kEgalitarian:
      case FairnessMode::kProportional: member = cap_[h] > 0; break;
      case FairnessMode::kUniformDynamic: member = cap_[h] > snap.y_floor_prev[t]; break;
    }
    if (member) {
      members_.push_back(h);
      rows_.push_back({Row::kFair, h});
    }
  }
}

double NetworkSlice::proportional_coefficient(int h) const { return prop_k_ / (cap_[h] + w_.gamma); }

void NetworkSlice::bounds(Vector& lo, Vector& up) const {
  lo.setConstant(n_vars_, -nlp::kInfinity);
  up.setConstant(n_vars_, nlp::kInfinity);
  for (int i = 0; i < nb_; ++i) {
    lo(v(i)) = model_.feeder.buses[i].v_min;
    up(v(i)) = model_.feeder.buses[i].v_max;
  }
  lo(v(0)) = up(v(0)) = 1.0;
  lo(theta(0)) = up(theta(0)) = 0.0;
  const auto& gl = model_.feeder.gen_limits;
  lo(pg_plus()) = 0.0;
  up(pg_plus()) = std::max(gl.p_max, 0.0);
  lo(pg_minus()) = 0.0;
  up(pg_minus()) = std::max(-gl.p_min, 0.0);
  lo(qg()) = gl.q_min;
  up(qg()) = gl.q_max;
  double cap_max = 0.0, p_max = 0.0;
  for (int h = 0; h < nh_; ++h) {
    const auto& r = model_.prosumers[h];
    lo(p_hat(h)) = r.p_min;
    up(p_hat(h)) = r.p_max;
    lo(y_hat(h)) = 0.0;
    up(y_hat(h)) = cap_[h];
    lo(q_hat(h)) = -r.q_max;
    up(q_hat(h)) = r.q_max;
    cap_max = std::max(cap_max, cap_[h]);
    p_max = std::max(p_max, r.p_max);
  }
  if (mode_ == FairnessMode::kEgalitarian || mode_ == FairnessMode::kProportional) {
    lo(aux()) = 0.0;
  } else if (mode_ == FairnessMode::kUniformDynamic) {
    lo(aux()) = -std::max(p_max, 1.0);
    up(aux()) = cap_max;
  }
}

Vector NetworkSlice::start_point() const {
  Vector x = Vector::Zero(n_vars_);
  for (int i = 0; i < nb_; ++i) x(v(i)) = 1.0;
  double net = 0.0;
  for (int h = 0; h < nh_; ++h) {
    x(p_hat(h)) = snap_.p[h][t_];
    x(y_hat(h)) = std::min(snap_.y[h][t_], cap_[h]);
    x(q_hat(h)) = snap_.q[h][t_];
    net += snap_.p[h][t_];
  }
  x(pg_plus()) = std::max(net, 0.0);
  x(pg_minus()) = std::max(-net, 0.0);
  return x;
}

NetworkSlice::Terms NetworkSlice::terms(const Vector& x) const {
  Terms out;
  const auto& gc = model_.feeder.gen_cost;
  const double pp = x(pg_plus());
  out.generation = gc.c2 * pp * pp + gc.c1 * pp + gc.c0;
  const auto& rho = snap_.rho;
  for (int h = 0; h < nh_; ++h) {
    const double dp = x(p_hat(h)) - snap_.p[h][t_];
    const double dy = x(y_hat(h)) - snap_.y[h][t_];
    const double dq = x(q_hat(h)) - snap_.q[h][t_];
    out.coupling += snap_.lambda_p[h][t_] * dp + 0.5 * rho.p * dp * dp;
    out.coupling += snap_.lambda_y[h][t_] * dy + 0.5 * rho.y * dy * dy;
    out.coupling += snap_.lambda_q[h][t_] * dq + 0.5 * rho.q * dq * dq;
    const double dd = x(q_hat(h)) - snap_.q_hat_prev[h][t_];
    out.damping += w_.beta * dd * dd;
  }
  if (mode_ == FairnessMode::kEgalitarian || mode_ == FairnessMode::kProportional) out.fairness = w_.alpha * x(aux());
  else if (mode_ == FairnessMode::kUniformDynamic) out.fairness = -w_.alpha * x(aux());
  return out;
}

double NetworkSlice::objective(const Vector& x) const {
  const Terms tm = terms(x);
  return tm.generation + tm.coupling + tm.damping + tm.fairness;
}

void NetworkSlice::gradient(const Vector& x, Vector& g) const {
  g.setZero(n_vars_);
  const auto& gc = model_.feeder.gen_cost;
  g(pg_plus()) = 2 * gc.c2 * x(pg_plus()) + gc.c1;
  const auto& rho = snap_.rho;
  for (int h = 0; h < nh_; ++h) {
    g(p_hat(h)) = snap_.lambda_p[h][t_] + rho.p * (x(p_hat(h)) - snap_.p[h][t_]);
    g(y_hat(h)) = snap_.lambda_y[h][t_] + rho.y * (x(y_hat(h)) - snap_.y[h][t_]);
    g(q_hat(h)) = snap_.lambda_q[h][t_] + rho.q * (x(q_hat(h)) - snap_.q[h][t_]) +
                  2 * w_.beta * (x(q_hat(h)) - snap_.q_hat_prev[h][t_]);
  }
  if (mode_ == FairnessMode::kEgalitarian || mode_ == FairnessMode::kProportional) g(aux()) = w_.alpha;
  else if (mode_ == FairnessMode::kUniformDynamic) g(aux()) = -w_.alpha;
}

// Rows 0..nb-1: active balance, nb..2nb-1: reactive balance, per unit.
// Prosumer active injection is -(p_hat + y_hat - y^k); reactive injection
// is +q_hat (inverter output).
void NetworkSlice::eq_values(const Vector& x, Vector& c) const {
  c.setZero(2 * nb_);
  for (int i = 0; i < nb_; ++i) {
    double p = 0.0, q = 0.0;
    const double vi = x(v(i));
    for (const auto& e : model_.admittance.rows[i]) {
      const double d = x(theta(i)) - x(theta(e.col));
      const double cs = std::cos(d), sn = std::sin(d);
      const double vv = vi * x(v(e.col));
      p += vv * (e.g * cs + e.b * sn);
      q += vv * (e.g * sn - e.b * cs);
    }
    c(i) = p;
    c(nb_ + i) = q;
  }
  c(0) -= (x(pg_plus()) - x(pg_minus())) / s_base_;
  c(nb_) -= x(qg()) / s_base_;
  for (int h = 0; h < nh_; ++h) {
    const int i = bus_of_[h];
    c(i) += (x(p_hat(h)) + x(y_hat(h)) - snap_.y[h][t_]) / s_base_;
    c(nb_ + i) -= x(q_hat(h)) / s_base_;
  }
}

void NetworkSlice::eq_jacobian(const Vector& x, std::vector<Triplet>& jac) const {
  for (int i = 0; i < nb_; ++i) {
    const double vi = x(v(i));
    double dp_dvi = 0.0, dq_dvi = 0.0, dp_dti = 0.0, dq_dti = 0.0;
    for (const auto& e : model_.admittance.rows[i]) {
      const int j = e.col;
      if (j == i) {
        dp_dvi += 2 * vi * e.g;
        dq_dvi += -2 * vi * e.b;
        continue;
      }
      const double vj = x(v(j));
      const double d = x(theta(i)) - x(theta(j));
      const double cs = std::cos(d), sn = std::sin(d);
      const double hp = e.g * cs + e.b * sn, hp1 = -e.g * sn + e.b * cs;
      const double hq = e.g * sn - e.b * cs, hq1 = e.g * cs + e.b * sn;
      dp_dvi += vj * hp;
      dq_dvi += vj * hq;
      dp_dti += vi * vj * hp1;
      dq_dti += vi * vj * hq1;
      jac.emplace_back(i, v(j), vi * hp);
      jac.emplace_back(nb_ + i, v(j), vi * hq);
      jac.emplace_back(i, theta(j), -vi * vj * hp1);
      jac.emplace_back(nb_ + i, theta(j), -vi * vj * hq1);
    }
    jac.emplace_back(i, v(i), dp_dvi);
    jac.emplace_back(nb_ + i, v(i), dq_dvi);
    jac.emplace_back(i, theta(i), dp_dti);
    jac.emplace_back(nb_ + i, theta(i), dq_dti);
  }
  jac.emplace_back(0, pg_plus(), -1.0 / s_base_);
  jac.emplace_back(0, pg_minus(), 1.0 / s_base_);
  jac.emplace_back(nb_, qg(), -1.0 / s_base_);
  for (int h = 0; h < nh_; ++h) {
    const int i = bus_of_[h];
    jac.emplace_back(i, p_hat(h), 1.0 / s_base_);
    jac.emplace_back(i, y_hat(h), 1.0 / s_base_);
    jac.emplace_back(nb_ + i, q_hat(h), -1.0 / s_base_);
  }
}

void NetworkSlice::ineq_values(const Vector& x, Vector& g) const {
  g.resize(static_cast<int>(rows_.size()));
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const int h = rows_[r].h;
    if (rows_[r].kind == Row::kCap) {
      g(r) = x(y_hat(h)) - x(p_hat(h)) - cap_[h];
      continue;
    }
    switch (mode_) {
      case FairnessMode::kEgalitarian: g(r) = x(y_hat(h)) - x(aux()); break;
      case FairnessMode::kProportional: g(r) = proportional_coefficient(h) * x(y_hat(h)) - x(aux()); break;
      case FairnessMode::kUniformDynamic: g(r) = x(aux()) + x(p_hat(h)); break;
      case FairnessMode::kNone: g(r) = 0.0; break;
    }
  }
}

void NetworkSlice::ineq_jacobian(const Vector&, std::vector<Triplet>& jac) const {
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const int row = static_cast<int>(r);
    const int h = rows_[r].h;
    if (rows_[r].kind == Row::kCap) {
      jac.emplace_back(row, y_hat(h), 1.0);
      jac.emplace_back(row, p_hat(h), -1.0);
      continue;
    }
    switch (mode_) {
      case FairnessMode::kEgalitarian:
        jac.emplace_back(row, y_hat(h), 1.0);
        jac.emplace_back(row, aux(), -1.0);
        break;
      case FairnessMode::kProportional:
        jac.emplace_back(row, y_hat(h), proportional_coefficient(h));
        jac.emplace_back(row, aux(), -1.0);
        break;
      case FairnessMode::kUniformDynamic:
        jac.emplace_back(row, aux(), 1.0);
        jac.emplace_back(row, p_hat(h), 1.0);
        break;
      case FairnessMode::kNone: break;
    }
  }
}

void NetworkSlice::hessian(const Vector& x, double s, const Vector& y_eq, const Vector&, std::vector<Triplet>& hess) const {
  const auto& rho = snap_.rho;
  hess.emplace_back(pg_plus(), pg_plus(), s * 2 * model_.feeder.gen_cost.c2);
  for (int h = 0; h < nh_; ++h) {
    hess.emplace_back(p_hat(h), p_hat(h), s * rho.p);
    hess.emplace_back(y_hat(h), y_hat(h), s * rho.y);
    hess.emplace_back(q_hat(h), q_hat(h), s * (rho.q + 2 * w_.beta));
  }
  auto add = [&](int a, int b, double val) {
    if (a >= b) hess.emplace_back(a, b, val);
    else hess.emplace_back(b, a, val);
  };
  for (int i = 0; i < nb_; ++i) {
    const double a = y_eq(i), b = y_eq(nb_ + i);
    const double vi = x(v(i));
    for (const auto& e : model_.admittance.rows[i]) {
      const int j = e.col;
      if (j == i) {
        add(v(i), v(i), 2 * (a * e.g - b * e.b));
        continue;
      }
      const double vj = x(v(j));
      const double d = x(theta(i)) - x(theta(j));
      const double cs = std::cos(d), sn = std::sin(d);
      // weighted term shape and its first derivative in the angle difference
      const double H = a * (e.g * cs + e.b * sn) + b * (e.g * sn - e.b * cs);
      const double H1 = a * (-e.g * sn + e.b * cs) + b * (e.g * cs + e.b * sn);
      const double H2 = -H;
      add(v(i), v(j), H);
      add(v(i), theta(i), vj * H1);
      add(v(i), theta(j), -vj * H1);
      add(v(j), theta(i), vi * H1);
      add(v(j), theta(j), -vi * H1);
      add(theta(i), theta(i), vi * vj * H2);
      add(theta(i), theta(j), -vi * vj * H2);
      add(theta(j), theta(j), vi * vj * H2);
    }
  }
}

Block NetworkDecision::prosumer_voltages(const NetworkModel& model) const {
  Block out;
  for (const auto& r : model.prosumers) out.push_back(v[r.bus]);
  return out;
}

namespace {

NetworkDecision empty_decision(const NetworkModel& model, FairnessMode mode) {
  const int T = model.horizon.T, nb = model.num_buses(), nh = model.num_prosumers();
  NetworkDecision d;
  d.v = zero_block(nb, T);
  d.theta = zero_block(nb, T);
  d.p_g.assign(T, 0.0);
  d.q_g.assign(T, 0.0);
  d.p_g_plus.assign(T, 0.0);
  d.p_g_minus.assign(T, 0.0);
  d.p_hat = d.y_hat = d.q_hat = zero_block(nh, T);
  d.mode = mode;
  d.aux.assign(T, 0.0);
  return d;
}

void store_slice(const NetworkSlice& slice, const Vector& x, int t, int nb, int nh, NetworkDecision& d) {
  for (int i = 0; i < nb; ++i) {
    d.v[i][t] = x(slice.v(i));
    d.theta[i][t] = x(slice.theta(i));
  }
  d.p_g_plus[t] = x(slice.pg_plus());
  d.p_g_minus[t] = x(slice.pg_minus());
  d.p_g[t] = d.p_g_plus[t] - d.p_g_minus[t];
  d.q_g[t] = x(slice.qg());
  for (int h = 0; h < nh; ++h) {
    d.p_hat[h][t] = x(slice.p_hat(h));
    d.y_hat[h][t] = x(slice.y_hat(h));
    d.q_hat[h][t] = x(slice.q_hat(h));
  }
  if (slice.aux() >= 0) d.aux[t] = x(slice.aux());
}

Vector pack(const NetworkSlice& slice, const NetworkDecision& d, int t, int nb, int nh) {
  Vector x = Vector::Zero(slice.num_vars());
  for (int i = 0; i < nb; ++i) {
    x(slice.v(i)) = d.v[i][t];
    x(slice.theta(i)) = d.theta[i][t];
  }
  x(slice.pg_plus()) = d.p_g_plus[t];
  x(slice.pg_minus()) = d.p_g_minus[t];
  x(slice.qg()) = d.q_g[t];
  for (int h = 0; h < nh; ++h) {
    x(slice.p_hat(h)) = d.p_hat[h][t];
    x(slice.y_hat(h)) = d.y_hat[h][t];
    x(slice.q_hat(h)) = d.q_hat[h][t];
  }
  if (slice.aux() >= 0) x(slice.aux()) = d.aux[t];
  return x;
}

}  // namespace

NetworkSolveResult solve_network(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                                 const NetworkWeights& weights, const std::vector<nlp::WarmStart>& warm,
                                 const NetworkSolveOptions& options) {
  const int T = model.horizon.T, nb = model.num_buses(), nh = model.num_prosumers();
  snap.validate(nh, T);
  if (!warm.empty() && static_cast<int>(warm.size()) != T) throw SubproblemError("network warm start must hold one entry per interval");

  NetworkSolveResult res;
  res.decision = empty_decision(model, mode);
  res.warm.resize(T);
  std::vector<double> slice_obj(T, 0.0);
  std::vector<int> slice_iters(T, 0);
  std::vector<std::string> errors(T);

  const bool parallel = options.execution == Execution::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int t = 0; t < T; ++t) {
    try {
      const NetworkSlice slice(model, snap, mode, weights, t);
      nlp::NlpSolution sol;
      bool have = false;
      if (!warm.empty() && warm[t].x.size() == slice.num_vars()) {
        nlp::SolverOptions o = options.nlp;
        o.mu0 = std::min(o.mu0, 1e-3);
        o.bound_push = std::min(o.bound_push, 1e-4);
        sol = nlp::solve(slice, o, &warm[t]);
        have = sol.optimal();
        slice_iters[t] += sol.iterations;
      }
      if (!have) {
        sol = nlp::solve(slice, options.nlp);
        slice_iters[t] += sol.iterations;
      }
      if (!sol.optimal()) {
        nlp::NlpSolution prev = std::move(sol);
        nlp::SolverOptions o = options.nlp;
        o.max_iter = std::max(o.max_iter * 3, 1000);
        sol = nlp::solve(slice, o);
        slice_iters[t] += sol.iterations;
        if (!sol.usable() && prev.usable()) sol = std::move(prev);
      }
      if (!sol.usable()) {
        errors[t] = "interval " + std::to_string(t) + ": " + nlp::to_string(sol.status) + " (kkt residual " +
                    std::to_string(sol.kkt_residual) + ")";
        continue;
      }
      store_slice(slice, sol.x, t, nb, nh, res.decision);
      slice_obj[t] = sol.objective;
      res.warm[t] = sol.warm_start();
    } catch (const std::exception& e) {
      errors[t] = "interval " + std::to_string(t) + ": " + e.what();
    }
  }
  std::string failed;
  for (const auto& e : errors)
    if (!e.empty()) failed += (failed.empty() ? "" : "; ") + e;
  if (!failed.empty()) throw SubproblemError("network subproblem failed: " + failed);

  for (int t = 0; t < T; ++t) {
    res.solver_objective += slice_obj[t];
    res.nlp_iterations += slice_iters[t];
  }
  res.objective = evaluate_network_objective(model, snap, mode, weights, res.decision);
  if (options.verify) {
    const double viol = fairness_violation(model, snap, mode, weights, res.decision);
    const double bal = power_balance_residual(model, snap, res.decision);
    if (viol > 1e-5 || bal > 1e-5) {
      std::ostringstream msg;
      msg << "network subproblem verification failed: fairness/cap violation " << viol << ", balance residual " << bal;
      throw SubproblemError(msg.str());
    }
  }
  return res;
}

NetworkObjective evaluate_network_objective(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                                            const NetworkWeights& w, const NetworkDecision& d) {
  NetworkObjective out;
  const auto& gc = model.feeder.gen_cost;
  const auto& rho = snap.rho;
  for (int t = 0; t < model.horizon.T; ++t) {
    const double pp = d.p_g_plus[t];
    out.generation += gc.c2 * pp * pp + gc.c1 * pp + gc.c0;
    for (int h = 0; h < model.num_prosumers(); ++h) {
      const double dp = d.p_hat[h][t] - snap.p[h][t];
      const double dy = d.y_hat[h][t] - snap.y[h][t];
      const double dq = d.q_hat[h][t] - snap.q[h][t];
      out.coupling += snap.lambda_p[h][t] * dp + 0.5 * rho.p * dp * dp + snap.lambda_y[h][t] * dy +
                      0.5 * rho.y * dy * dy + snap.lambda_q[h][t] * dq + 0.5 * rho.q * dq * dq;
      const double dd = d.q_hat[h][t] - snap.q_hat_prev[h][t];
      out.damping += w.beta * dd * dd;
    }
    if (mode == FairnessMode::kEgalitarian || mode == FairnessMode::kProportional) out.fairness += w.alpha * d.aux[t];
    else if (mode == FairnessMode::kUniformDynamic) out.fairness -= w.alpha * d.aux[t];
  }
  return out;
}

double power_balance_residual(const NetworkModel& model, const CouplingSnapshot& snap, const NetworkDecision& d) {
  double worst = 0.0;
  for (int t = 0; t < model.horizon.T; ++t) {
    const NetworkSlice slice(model, snap, d.mode, NetworkWeights{}, t);
    Vector c;
    slice.eq_values(pack(slice, d, t, model.num_buses(), model.num_prosumers()), c);
    worst = std::max(worst, c.lpNorm<Eigen::Infinity>());
  }
  return worst;
}

double fairness_violation(const NetworkModel& model, const CouplingSnapshot& snap, FairnessMode mode,
                          const NetworkWeights& weights, const NetworkDecision& d) {
  double worst = 0.0;
  for (int t = 0; t < model.horizon.T; ++t) {
    const NetworkSlice slice(model, snap, mode, weights, t);
    Vector g;
    slice.ineq_values(pack(slice, d, t, model.num_buses(), model.num_prosumers()), g);
    if (g.size() > 0) worst = std::max(worst, g.maxCoeff());
    for (int h = 0; h < model.num_prosumers(); ++h) {
      worst = std::max(worst, -d.y_hat[h][t]);
      worst = std::max(worst, d.y_hat[h][t] - snap.headroom(h, t));
    }
  }
  return worst;
}

void write_network_trace(std::ostream& out, const NetworkModel& model, const NetworkDecision& d) {
  out << "kind,index,t,value\n";
  for (int t = 0; t < d.horizon(); ++t) {
    for (int i = 0; i < model.num_buses(); ++i) {
      out << "v," << i << "," << t << "," << d.v[i][t] << "\n";
      out << "theta," << i << "," << t << "," << d.theta[i][t] << "\n";
    }
    out << "p_g,0," << t << "," << d.p_g[t] << "\n";
    for (int h = 0; h < model.num_prosumers(); ++h) out << "y_hat," << model.prosumers[h].id << "," << t << "," << d.y_hat[h][t] << "\n";
  }
}

}  // namespace dopf
