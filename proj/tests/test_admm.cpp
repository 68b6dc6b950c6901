#include <catch_amalgamated.hpp>

#include "dopf/admm.hpp"
#include "dopf/scenario.hpp"

#include <cmath>
#include <memory>
#include <set>
#include <sstream>

using namespace dopf;
using Catch::Approx;

namespace {

ScenarioConfig small_config(Scenario s, int n = 3) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.feeder.prosumers = n;
  cfg.profiles.intervals = 12;
  cfg.profiles.dt = 2.0;
  cfg.admm = AdmmConfig::for_mode(fairness_of(s));
  return cfg;
}

struct Agents {
  std::vector<std::unique_ptr<ProsumerAgent>> owned;
  std::vector<ProsumerEndpoint*> ptrs;
};

Agents make_agents(const Instance& inst) {
  Agents a;
  const auto buses = inst.feeder.prosumer_buses();
  for (std::size_t h = 0; h < inst.prosumers.size(); ++h) {
    a.owned.push_back(std::make_unique<ProsumerAgent>(inst.prosumers[h], inst.horizon, buses[h], inst.feeder.base_voltage));
    a.ptrs.push_back(a.owned.back().get());
  }
  return a;
}

// Forwards to a real household and records what crosses the boundary.
class Recorder : public ProsumerEndpoint {
 public:
  explicit Recorder(ProsumerEndpoint& inner) : inner_(inner) {}
  ProsumerRegistration registration() const override { return inner_.registration(); }
  ProsumerReply exchange(const ProsumerInbox& in) override {
    inbox.push_back(in);
    auto r = inner_.exchange(in);
    replies.push_back(r);
    return r;
  }
  std::vector<ProsumerInbox> inbox;
  std::vector<ProsumerReply> replies;

 private:
  ProsumerEndpoint& inner_;
};

// Household that answers from a script and holds no model at all.
class Scripted : public ProsumerEndpoint {
 public:
  Scripted(ProsumerRegistration reg, int T) : reg_(reg), T_(T) {}
  ProsumerRegistration registration() const override { return reg_; }
  ProsumerReply exchange(const ProsumerInbox& in) override {
    ++calls;
    return {reg_.id, std::vector<double>(T_, 0.0), std::vector<double>(T_, 0.0), std::vector<double>(T_, 0.0)};
    (void)in;
  }
  int calls = 0;

 private:
  ProsumerRegistration reg_;
  int T_;
};

}  // namespace

TEST_CASE("stopping thresholds", "[admm]") {
  const int H = 5, T = 48;
  NetworkDecision net;
  net.p_hat = net.y_hat = net.q_hat = zero_block(H, T);
  const auto now = ProsumerCopies::zero(H, T);
  const auto lam = Multipliers::zero(H, T);
  const auto tol = compute_tolerances(net, now, lam.p, lam.y, lam.q, AdmmConfig{});
  CHECK(tol.pri == Approx(std::sqrt(720.0) * 1e-3));
  CHECK(tol.pri == Approx(0.02683).margin(1e-5));
  CHECK(tol.dual == Approx(tol.pri));

  // relative part uses the larger of the two copies
  net.p_hat[0][0] = 3.0;
  auto with_copy = now;
  with_copy.y[1][1] = 4.0;
  const auto t2 = compute_tolerances(net, with_copy, lam.p, lam.y, lam.q, AdmmConfig{});
  CHECK(t2.pri == Approx(std::sqrt(720.0) * 1e-3 + 1e-2 * 4.0));
}

TEST_CASE("dual update and residual balancing", "[admm]") {
  NetworkDecision net;
  net.p_hat = {{0.2}};
  net.y_hat = {{0.0}};
  net.q_hat = {{0.0}};
  ProsumerCopies now;
  now.p = {{0.15}};
  now.y = {{0.0}};
  now.q = {{0.0}};
  Multipliers lam = Multipliers::zero(1, 1);
  lam.p[0][0] = 0.2;
  dual_update(lam, {2.0, 1.0, 1.0}, net, now);
  CHECK(lam.p[0][0] == Approx(0.3));
  CHECK(lam.y[0][0] == 0.0);

  AdmmConfig cfg;  // tau 1.15 / 0.9, mu 1/1.15 / 1.15
  ResidualNorms n;
  n.r_p = 1.0, n.s_p = 0.1;  // primal dominates: increase
  n.r_y = 0.1, n.s_y = 1.0;  // dual dominates: decrease
  n.r_q = 1.0 / 1.15, n.s_q = 1.0;  // on the edge of both tests: unchanged
  const auto rho = rho_update({1.0, 1.0, 1.0}, n, cfg);
  CHECK(rho.p == Approx(2.15));
  CHECK(rho.y == Approx(1.0 / 1.9));
  CHECK(rho.q == 1.0);

  ResidualNorms quiet;  // both at rounding level
  CHECK(rho_update({1.0, 1.0, 1.0}, quiet, cfg).p == 1.0);

  CHECK(AdmmConfig::for_mode(FairnessMode::kEgalitarian).mu_incr == Approx(1.0 / 0.8));
  CHECK(AdmmConfig::for_mode(FairnessMode::kEgalitarian).mu_decr == Approx(0.8));
  CHECK(AdmmConfig::for_mode(FairnessMode::kProportional).mu_decr == Approx(1.15));
  AdmmConfig bad;
  bad.eps_abs = -1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("residuals are differences of the copies", "[admm]") {
  NetworkDecision net;
  net.p_hat = {{1.0, 2.0}};
  net.y_hat = {{0.5, 0.0}};
  net.q_hat = {{0.0, 0.1}};
  ProsumerCopies now, before;
  now.p = {{0.5, 2.0}};
  now.y = {{0.5, 0.5}};
  now.q = {{0.0, 0.0}};
  before = ProsumerCopies::zero(1, 2);
  const auto r = compute_residuals(net, now, before, {2.0, 1.0, 1.0});
  const auto n = norms_of(r);
  CHECK(n.r_p == Approx(0.5));
  CHECK(n.r_y == Approx(0.5));
  CHECK(n.r_q == Approx(0.1));
  CHECK(n.s_p == Approx(2.0 * std::sqrt(0.25 + 4.0)));
  CHECK(n.r() == Approx(std::sqrt(0.25 + 0.25 + 0.01)));
}

TEST_CASE("empty households converge at once", "[admm]") {
  auto cfg = small_config(Scenario::C);
  auto inst = build_instance(cfg);
  for (auto& p : inst.prosumers) {
    std::fill(p.demand.begin(), p.demand.end(), 0.0);
    std::fill(p.pv_avail.begin(), p.pv_avail.end(), 0.0);
    p.q_max = 0.0;
  }
  auto agents = make_agents(inst);
  const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
  const auto rep = run_admm(model, agents.ptrs, cfg.admm);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 3);
  for (double p : rep.network.p_g) CHECK(std::abs(p) < 1e-2);  // kW
}

TEST_CASE("coordination converges and the copies agree", "[admm]") {
  for (Scenario s : {Scenario::D, Scenario::E}) {
    auto cfg = small_config(s);
    const auto inst = build_instance(cfg);
    cfg.admm.mode = fairness_of(s);
    cfg.admm.weights.alpha = s == Scenario::E ? 75.0 : 0.0;
    auto agents = make_agents(inst);
    const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
    const auto rep = run_admm(model, agents.ptrs, cfg.admm);
    CAPTURE(to_string(s));
    REQUIRE(rep.converged);
    const auto& last = rep.history.back();
    CHECK(last.norms.r() <= last.eps_pri);
    CHECK(last.norms.s() <= last.eps_dual);
    for (int h = 0; h < 3; ++h)
      for (int t = 0; t < 12; ++t) CHECK(std::abs(rep.network.p_hat[h][t] - rep.copies.p[h][t]) <= last.eps_pri);

    std::ostringstream csv;
    write_residual_header(csv);
    for (const auto& l : rep.history) write_residual_line(csv, l);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == rep.iterations + 1);
  }
}

TEST_CASE("messages carry only coupling data", "[admm][privacy]") {
  auto cfg = small_config(Scenario::E);
  const auto inst = build_instance(cfg);
  cfg.admm.mode = FairnessMode::kEgalitarian;
  auto agents = make_agents(inst);
  std::vector<std::unique_ptr<Recorder>> rec;
  std::vector<ProsumerEndpoint*> eps;
  for (auto* a : agents.ptrs) {
    rec.push_back(std::make_unique<Recorder>(*a));
    eps.push_back(rec.back().get());
  }
  const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
  const auto rep = run_admm(model, eps, cfg.admm);
  const int T = inst.horizon.T;
  for (int h = 0; h < 3; ++h) {
    const auto& r = *rec[h];
    CHECK(static_cast<int>(r.inbox.size()) == rep.iterations);
    for (const auto& in : r.inbox) {
      CHECK(in.id == h + 1);
      for (const auto* v : {&in.p_hat, &in.y_hat, &in.v, &in.lambda_p, &in.lambda_y})
        CHECK(static_cast<int>(v->size()) == T);
    }
    for (const auto& out : r.replies) {
      CHECK(out.id == h + 1);
      CHECK(static_cast<int>(out.p.size() + out.y.size() + out.q.size()) == 3 * T);
    }
    // the registration holds the connection point and exchange envelope only
    const auto reg = r.registration();
    CHECK(reg.bus == inst.feeder.prosumer_buses()[h]);
    CHECK(reg.p_max == inst.prosumers[h].p_max);
  }
  CHECK(rep.payload.to_prosumers == static_cast<long long>(rep.iterations) * 3 * (5 * T + 2));
  CHECK(rep.payload.to_aggregator == static_cast<long long>(rep.iterations) * 3 * 3 * T);
}

TEST_CASE("aggregator runs against households it cannot inspect", "[admm][privacy]") {
  const auto f = build_line_topology(2, impedance_to_admittance({0.5, 0.2}));
  std::vector<ProsumerRegistration> regs{{1, 1, 0.0, -15, 15}, {2, 2, 0.0, -15, 15}};
  const NetworkModel model(f, regs, {4, 0.5});
  Scripted a(regs[0], 4), b(regs[1], 4);
  const auto rep = run_admm(model, {&a, &b}, AdmmConfig{});
  CHECK(rep.converged);
  CHECK(a.calls == rep.iterations);
  CHECK(b.calls == rep.iterations);

  Scripted wrong({1, 2, 0.0, -15, 15}, 4);
  CHECK_THROWS(run_admm(model, {&wrong, &b}, AdmmConfig{}));
}

TEST_CASE("serial and parallel runs agree", "[admm][property]") {
  auto cfg = small_config(Scenario::G, 4);
  const auto inst = build_instance(cfg);
  cfg.admm.mode = FairnessMode::kUniformDynamic;
  const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
  auto a1 = make_agents(inst), a2 = make_agents(inst);
  auto serial = cfg.admm;
  serial.execution = Execution::kSerial;
  const auto r1 = run_admm(model, a1.ptrs, serial);
  const auto r2 = run_admm(model, a2.ptrs, cfg.admm);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.network.p_g == r2.network.p_g);
  CHECK(r1.copies.y == r2.copies.y);
}
