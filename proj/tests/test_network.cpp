#include <catch_amalgamated.hpp>

#include "dopf/network_subproblem.hpp"
#include "dopf/power_flow.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <random>

using namespace dopf;
using Catch::Approx;

namespace {

const Admittance kHop = impedance_to_admittance({0.3 / 0.529, 0.1 / 0.529});

std::vector<ProsumerRegistration> registrations(const FeederSpec& f, double p_min, double p_max, double q_max) {
  std::vector<ProsumerRegistration> out;
  const auto buses = f.prosumer_buses();
  for (std::size_t h = 0; h < buses.size(); ++h)
    out.push_back({static_cast<int>(h) + 1, buses[h], q_max, p_min, p_max});
  return out;
}

CouplingSnapshot random_snapshot(int H, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto s = CouplingSnapshot::initial(H, T);
  for (int h = 0; h < H; ++h)
    for (int t = 0; t < T; ++t) {
      s.p[h][t] = 4 * u(rng);
      s.y[h][t] = 1 + u(rng);
      s.q[h][t] = 0.2 * u(rng);
      s.lambda_p[h][t] = u(rng);
      s.lambda_y[h][t] = u(rng);
      s.lambda_q[h][t] = u(rng);
      s.q_hat_prev[h][t] = 0.2 * u(rng);
    }
  for (double& f : s.y_floor_prev) f = 1.0 + u(rng);
  s.rho = {1.7, 0.6, 2.3};
  return s;
}

// random point strictly inside the variable box
nlp::Vector interior_point(const nlp::NlpProblem& p, std::mt19937_64& rng) {
  nlp::Vector lo, up;
  p.bounds(lo, up);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  nlp::Vector x(p.num_vars());
  for (int i = 0; i < x.size(); ++i) {
    const double a = std::max(lo(i), -3.0), b = std::min(up(i), 3.0);
    x(i) = a + (b - a) * u(rng);
  }
  return x;
}

double max_of(const Block& b, int t) {
  double m = -INFINITY;
  for (const auto& row : b) m = std::max(m, row[t]);
  return m;
}

}  // namespace

TEST_CASE("Newton load flow matches the closed-form two-bus solution", "[power-flow][oracle]") {
  const Admittance y{10.0, -20.0};
  const auto f = build_line_topology(1, y);
  const std::complex<double> z = 1.0 / std::complex<double>(y.g, y.b);
  for (const auto load : {std::complex<double>(0.01, 0.0), std::complex<double>(0.05, 0.02),
                          std::complex<double>(-0.08, 0.01), std::complex<double>(0.2, -0.05)}) {
    const auto pf = solve_power_flow(f, {0.0, -load.real()}, {0.0, -load.imag()});
    REQUIRE(pf.converged);
    const auto ref = oracle::two_bus_voltage(z, load);
    CHECK(pf.v[1] == Approx(std::abs(ref)).epsilon(1e-10));
    CHECK(pf.theta[1] == Approx(std::arg(ref)).margin(1e-10));
  }
}

TEST_CASE("load flow balances every bus on random trees", "[power-flow][property]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n : {3, 15, 50}) {
    const double scale = 0.03 / n;
    const auto f = build_tree_topology(n, default_spur_layout(n, 5), kHop);
    std::vector<double> p(n + 1), q(n + 1);
    for (int i = 1; i <= n; ++i) p[i] = scale * u(rng), q[i] = 0.2 * scale * u(rng);
    const auto pf = solve_power_flow(f, p, q);
    REQUIRE(pf.converged);
    std::vector<double> pc, qc;
    bus_injections(build_admittance(f), pf.v, pf.theta, pc, qc);
    for (int i = 1; i <= n; ++i) {
      CHECK(pc[i] == Approx(p[i]).margin(1e-9));
      CHECK(qc[i] == Approx(q[i]).margin(1e-9));
    }
    // slack covers the rest plus losses
    double net = 0.0;
    for (int i = 1; i <= n; ++i) net += p[i];
    CHECK(pf.p_slack + net >= -1e-12);
  }
}

TEST_CASE("network slice derivatives agree with finite differences", "[network][oracle]") {
  std::mt19937_64 rng(23);
  const auto f = build_tree_topology(6, default_spur_layout(6, 3), kHop);
  const NetworkModel model(f, registrations(f, -15, 15, 0.5), {3, 0.5});
  const auto snap = random_snapshot(6, 3, rng);
  for (auto mode : {FairnessMode::kNone, FairnessMode::kEgalitarian, FairnessMode::kProportional,
                    FairnessMode::kUniformDynamic}) {
    CAPTURE(to_string(mode));
    for (int t = 0; t < 3; ++t) {
      const NetworkSlice slice(model, snap, mode, {}, t);
      CHECK(nlp::check_gradients(slice, slice.start_point()) <= 1e-5);
      const auto x = interior_point(slice, rng);
      CHECK(nlp::check_gradients(slice, x) <= 1e-5);
      std::normal_distribution<double> g;
      nlp::Vector ye(slice.num_eq()), yi(slice.num_ineq());
      for (int i = 0; i < ye.size(); ++i) ye(i) = g(rng);
      for (int i = 0; i < yi.size(); ++i) yi(i) = std::abs(g(rng));
      CHECK(oracle::check_hessian(slice, x, ye, yi) <= 1e-5);
    }
  }
}

TEST_CASE("no load means flat voltage and no generation", "[network]") {
  const auto f = build_line_topology(4, kHop);
  const NetworkModel model(f, registrations(f, -15, 15, 0.0), {4, 0.5});
  const auto snap = CouplingSnapshot::initial(4, 4);
  NetworkSolveOptions tight;
  tight.nlp.tol = 1e-12;
  const auto res = solve_network(model, snap, FairnessMode::kNone, {}, {}, tight);
  for (const auto& row : res.decision.v)
    for (double v : row) CHECK(v == Approx(1.0).margin(1e-6));
  for (double p : res.decision.p_g) CHECK(p == Approx(0.0).margin(1e-4));  // kW
  CHECK(res.solver_objective == Approx(f.gen_cost.c0 * 4).margin(1e-9));
}

TEST_CASE("fixed import reproduces the two-bus load flow", "[network][oracle]") {
  const Admittance y{10.0, -20.0};
  const auto f = build_line_topology(1, y);
  const NetworkModel model(f, registrations(f, 1.0, 1.0, 0.0), {2, 0.5});
  const auto res = solve_network(model, CouplingSnapshot::initial(1, 2), FairnessMode::kNone, {});
  const auto ref = oracle::two_bus_voltage(1.0 / std::complex<double>(y.g, y.b), {0.01, 0.0});
  for (int t = 0; t < 2; ++t) {
    CHECK(res.decision.v[1][t] == Approx(std::abs(ref)).margin(1e-6));
    CHECK(res.decision.theta[1][t] == Approx(std::arg(ref)).margin(1e-6));
    // generation = load + losses
    CHECK(res.decision.p_g[t] >= 1.0);
    CHECK(res.decision.p_g[t] == Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("curtailment sharing under a reverse-flow limit", "[network]") {
  // five prosumers held at 5 kW export with 10 kW of headroom each; the
  // feeder takes back 21 kW, so about 4 kW must be curtailed
  auto f = build_line_topology(5, {1e3, 0.0});
  f.gen_limits.p_min = -21.0;
  const NetworkModel model(f, registrations(f, -5.0, -5.0, 0.0), {1, 0.5});
  auto snap = CouplingSnapshot::initial(5, 1);
  for (auto& row : snap.p) row[0] = -10.0;

  SECTION("identical headroom gives equal shares") {
    for (auto mode : {FairnessMode::kNone, FairnessMode::kEgalitarian}) {
      const auto res = solve_network(model, snap, mode, {});
      for (const auto& row : res.decision.y_hat) CHECK(row[0] == Approx(0.8).margin(1e-2));
      CHECK(fairness_violation(model, snap, mode, {}, res.decision) <= 1e-7);
    }
  }
  SECTION("unequal multipliers: only the egalitarian mode equalizes") {
    snap.lambda_y = {{-1.0}, {-0.5}, {0.0}, {0.5}, {1.0}};
    const auto none = solve_network(model, snap, FairnessMode::kNone, {});
    const auto egal = solve_network(model, snap, FairnessMode::kEgalitarian, {});
    CHECK(none.decision.y_hat[0][0] - none.decision.y_hat[4][0] > 0.5);
    for (const auto& row : egal.decision.y_hat) CHECK(row[0] == Approx(egal.decision.y_hat[0][0]).margin(1e-3));

    NetworkWeights w0;
    w0.alpha = 0.0;
    const auto free = solve_network(model, snap, FairnessMode::kEgalitarian, w0);
    CHECK(max_of(egal.decision.y_hat, 0) <= max_of(free.decision.y_hat, 0) + 1e-6);
  }
}

TEST_CASE("network objective decomposes into its terms", "[network][property]") {
  std::mt19937_64 rng(31);
  const auto f = build_tree_topology(8, default_spur_layout(8, 2), kHop);
  const NetworkModel model(f, registrations(f, -15, 15, 0.5), {4, 0.5});
  const auto snap = random_snapshot(8, 4, rng);
  for (auto mode : {FairnessMode::kNone, FairnessMode::kEgalitarian, FairnessMode::kProportional,
                    FairnessMode::kUniformDynamic}) {
    CAPTURE(to_string(mode));
    NetworkSolveOptions serial;
    serial.execution = Execution::kSerial;
    const auto a = solve_network(model, snap, mode, {}, {}, serial);
    const auto b = solve_network(model, snap, mode, {});
    const auto obj = evaluate_network_objective(model, snap, mode, {}, a.decision);
    CHECK(obj.total() == Approx(a.solver_objective).epsilon(1e-8).margin(1e-8));
    CHECK(power_balance_residual(model, snap, a.decision) <= 1e-6);
    CHECK(fairness_violation(model, snap, mode, {}, a.decision) <= 1e-6);
    // curtailment never exceeds its headroom
    for (int h = 0; h < 8; ++h)
      for (int t = 0; t < 4; ++t) CHECK(a.decision.y_hat[h][t] <= snap.headroom(h, t) + 1e-8);
    CHECK(a.decision.p_g == b.decision.p_g);
  }
}

TEST_CASE("network model rejects inconsistent registrations", "[network]") {
  const auto f = build_line_topology(3, kHop);
  auto regs = registrations(f, -15, 15, 0.5);
  std::swap(regs[0], regs[1]);
  CHECK_THROWS_AS(NetworkModel(f, regs, {4, 0.5}), SubproblemError);
  regs = registrations(f, 2, 1, 0.5);
  CHECK_THROWS_AS(NetworkModel(f, regs, {4, 0.5}), SubproblemError);
  const NetworkModel ok(f, registrations(f, -15, 15, 0.5), {4, 0.5});
  CHECK_THROWS_AS(solve_network(ok, CouplingSnapshot::initial(3, 5), FairnessMode::kNone, {}), SubproblemError);
}
