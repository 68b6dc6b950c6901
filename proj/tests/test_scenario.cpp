#include <catch_amalgamated.hpp>

#include "dopf/scenario.hpp"
#include "dopf/sectioned_text.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

using namespace dopf;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small_config(Scenario s, int n = 3) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.feeder.prosumers = n;
  cfg.profiles.intervals = 12;
  cfg.profiles.dt = 2.0;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dopf_test_" + name);
  fs::remove_all(dir);
  return dir;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("curtailment dispersion", "[scenario]") {
  const Block avail{{3.0}, {3.0}};
  const Block ex{{1.0}, {1.0}};
  SECTION("one of two households curtailed") {
    int n = 0;
    const auto cv = mean_curtailment_cv({{0.0}, {2.0}}, ex, avail, &n);
    REQUIRE(cv.has_value());
    CHECK(*cv == Approx(1.0));
    CHECK(n == 1);
  }
  SECTION("equal curtailment") {
    CHECK(*mean_curtailment_cv({{1.5}, {1.5}}, ex, avail) == Approx(0.0).margin(1e-15));
  }
  SECTION("no curtailment gives no value") {
    CHECK_FALSE(mean_curtailment_cv({{0.0}, {0.0}}, ex, avail).has_value());
  }
  SECTION("night and non-exporters are left out") {
    const Block a2{{0.0, 2.0}, {0.0, 2.0}, {0.0, 2.0}};
    const Block e2{{0.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}};
    const Block y2{{0.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}};
    int n = 0;
    CHECK(*mean_curtailment_cv(y2, e2, a2, &n) == Approx(0.0).margin(1e-15));
    CHECK(n == 1);
  }
}

TEST_CASE("voltage violations are listed by bus and interval", "[scenario]") {
  const Block v{{1.0, 1.0}, {1.11, 0.93}};
  const auto out = voltage_violations(v, {0.9, 0.94}, {1.1, 1.1});
  REQUIRE(out.size() == 2);
  CHECK(out[0].bus == 1);
  CHECK(out[0].t == 0);
  CHECK(out[1].t == 1);
  CHECK(voltage_violations(v, {0.9, 0.94}, {1.1, 1.1}, 0.02).empty());
}

TEST_CASE("water-filling reference", "[scenario][oracle]") {
  SECTION("shedding 3 kW") {
    const auto w = oracle::water_fill({5, 4, 3, 1, 1}, 3.0);
    CHECK(w.level == Approx(3.0));
    CHECK(w.curtail == std::vector<double>{2.0, 1.0, 0.0, 0.0, 0.0});
  }
  SECTION("level between breakpoints") {
    const auto w = oracle::water_fill({5, 4, 3, 1, 1}, 7.0 / 3.0);
    CHECK(w.level == Approx(10.0 / 3.0));
    CHECK(w.curtail[0] == Approx(5.0 / 3.0));
    CHECK(w.curtail[1] == Approx(2.0 / 3.0));
    CHECK(w.curtail[2] == 0.0);
  }
  SECTION("conserves the shed amount") {
    for (double shed : {0.0, 0.5, 4.0, 9.0, 14.0}) {
      const auto w = oracle::water_fill({5, 4, 3, 1, 1}, shed);
      CHECK(std::accumulate(w.curtail.begin(), w.curtail.end(), 0.0) == Approx(shed).margin(1e-12));
    }
  }
  CHECK_THROWS(oracle::water_fill({1, 1}, 3.0));
}

TEST_CASE("config text round trip and errors", "[scenario]") {
  auto cfg = small_config(Scenario::F, 7);
  cfg.alpha = 12.5;
  cfg.feeder.c2 = 0.02;
  std::stringstream ss;
  write_config(ss, cfg);
  const auto back = read_config(ss);
  CHECK(back.scenario == Scenario::F);
  CHECK(back.feeder.prosumers == 7);
  CHECK(back.alpha == 12.5);
  CHECK(back.feeder.c2 == 0.02);
  CHECK(back.profiles.dt == 2.0);

  std::istringstream unknown("[scenario]\nname = E\nbogus = 1\n");
  CHECK_THROWS(read_config(unknown));
  std::istringstream letter("[scenario]\nname = Q\n");
  CHECK_THROWS(read_config(letter));
  auto bad = small_config(Scenario::E);
  bad.feeder.prosumers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("instances follow the configuration", "[scenario]") {
  auto cfg = small_config(Scenario::E, 30);
  const auto inst = build_instance(cfg);
  CHECK(inst.prosumers.size() == 30);
  CHECK(inst.feeder.num_buses() == 31);
  CHECK(inst.feeder.gen_cost.c2 == 0.015);
  CHECK(build_instance(small_config(Scenario::E, 25)).feeder.gen_cost.c2 == 0.025);
  for (const auto& p : inst.prosumers) {
    CHECK(p.s_max == Approx(*std::max_element(p.pv_avail.begin(), p.pv_avail.end())));
    CHECK(p.q_max == Approx(0.1 * p.s_max));
  }
  CHECK(build_instance(small_config(Scenario::C)).prosumers[0].q_max == 0.0);
  CHECK(build_instance(small_config(Scenario::B)).prosumers[0].export_cap == 2.0);
}

TEST_CASE("scenario outputs are self-consistent", "[scenario][property]") {
  for (Scenario s : {Scenario::A, Scenario::B, Scenario::E, Scenario::G}) {
    CAPTURE(to_string(s));
    const auto cfg = small_config(s);
    const auto rep = run_scenario(cfg);
    REQUIRE(rep.error.empty());
    CHECK(rep.converged);
    REQUIRE(rep.schedules.size() == 3);
    for (std::size_t h = 0; h < 3; ++h)
      for (int t = 0; t < 12; ++t)
        CHECK(rep.schedules[h].p_pv[t] + rep.schedules[h].y[t] == Approx(rep.profiles[h].pv[t]).margin(1e-12));
    if (is_coordinated(s)) CHECK(rep.max_coupling_gap <= 0.1);

    const auto dir = scratch(to_string(s));
    emit_outputs(rep, dir.string());
    for (const char* f : {"residuals.csv", "schedules.csv", "voltages.csv", "transformer.csv", "metrics.json",
                          "config_resolved.ini"})
      CHECK(fs::exists(dir / f));
    CHECK(count_lines(dir / "schedules.csv") == 1 + 3 * 12);
    if (!is_coordinated(s)) CHECK(count_lines(dir / "residuals.csv") <= 1);
    double diff = 1.0;
    recompute_metrics(dir.string(), &diff);
    CHECK(diff <= 1e-9);
    fs::remove_all(dir);
  }
}

TEST_CASE("a run replays bit for bit from its resolved config", "[scenario][property]") {
  const auto cfg = small_config(Scenario::F);
  const auto first = run_scenario(cfg);
  const auto dir = scratch("replay");
  emit_outputs(first, dir.string());
  const auto again = run_scenario(load_config((dir / "config_resolved.ini").string()));
  CHECK(again.iterations == first.iterations);
  CHECK(again.p_g == first.p_g);
  for (std::size_t h = 0; h < first.schedules.size(); ++h) {
    CHECK(again.schedules[h].p == first.schedules[h].p);
    CHECK(again.schedules[h].y == first.schedules[h].y);
  }
  CHECK(again.metrics.objective == first.metrics.objective);
  fs::remove_all(dir);
}

TEST_CASE("curtailment and export caps in the uncoordinated cases", "[scenario]") {
  const auto b = run_scenario(small_config(Scenario::B));
  for (const auto& d : b.schedules)
    for (double pm : d.p_minus) CHECK(pm <= 2.0 + 1e-6);
  const auto a = run_scenario(small_config(Scenario::A));
  for (const auto& d : a.schedules)
    for (double q : d.q) CHECK(q == 0.0);
}

TEST_CASE("central reference problem has exact derivatives", "[oracle]") {
  auto cfg = small_config(Scenario::C, 3);
  cfg.profiles.intervals = 4;
  cfg.profiles.dt = 6.0;
  const auto inst = build_instance(cfg);
  const auto prob = oracle::make_central_problem(inst.feeder, inst.prosumers, inst.horizon);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  nlp::Vector x = prob->start_point();
  for (int i = 0; i < x.size(); ++i) x(i) += u(rng);
  CHECK(nlp::check_gradients(*prob, x) <= 1e-5);
  nlp::Vector ye(prob->num_eq()), yi(prob->num_ineq());
  for (int i = 0; i < ye.size(); ++i) ye(i) = u(rng);
  for (int i = 0; i < yi.size(); ++i) yi(i) = std::abs(u(rng));
  CHECK(oracle::check_hessian(*prob, x, ye, yi) <= 1e-5);

  const auto res = oracle::central_opf(inst.feeder, inst.prosumers, inst.horizon);
  CHECK(res.optimal);
}
