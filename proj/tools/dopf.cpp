#include "dopf/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

void print_summary(const dopf::SolveReport& r) {
  const auto& m = r.metrics;
  std::printf("scenario %s: %s after %d iterations, %.2f s (parallel estimate %.2f s)\n", dopf::to_string(r.scenario).c_str(),
              r.converged ? "converged" : "NOT converged", r.iterations, r.seconds, r.parallel_seconds);
  if (!r.error.empty()) std::printf("  error: %s\n", r.error.c_str());
  std::printf("  curtailment %.4f kWh, export %.4f kWh\n", m.curtailment_kwh, m.export_kwh);
  if (m.cv_mean) std::printf("  mean CV of curtailment %.4f over %d intervals\n", *m.cv_mean, m.cv_intervals);
  else std::printf("  mean CV of curtailment: n/a\n");
  std::printf("  objective %.4f $ (generation %.4f, households %.4f)\n", m.objective, m.generation_cost, m.prosumer_cost);
  if (m.f_pct_c) std::printf("  F vs C %+.3f %%\n", *m.f_pct_c);
  if (m.f_pct_d) std::printf("  F vs D %+.3f %%\n", *m.f_pct_d);
  std::printf("  voltage range [%.5f, %.5f] pu, %d over / %d under-voltage intervals\n", m.v_min, m.v_max,
              m.over_voltage_intervals, m.under_voltage_intervals);
  if (r.iterations > 0 && !r.history.empty())
    std::printf("  coupling gap max %.5f kW, mean %.6f kW\n", r.max_coupling_gap, r.mean_coupling_gap);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed OPF with fair PV curtailment"};
  app.require_subcommand(1);

  std::string config, scenario, out, dir;
  long long seed = -1;
  bool trace = false;

  auto* run = app.add_subcommand("run", "run one scenario and write its outputs");
  run->add_option("--config", config, "scenario config file")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", scenario, "override the scenario letter (A-G)");
  run->add_option("--seed", seed, "override the profile seed")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "override the output directory");
  run->add_flag("--trace", trace, "dump the network state of every iteration");

  auto* val = app.add_subcommand("validate", "check a config and the instance it builds");
  val->add_option("--config", config, "scenario config file")->required()->check(CLI::ExistingFile);

  auto* rep = app.add_subcommand("report", "recompute metrics from an output directory");
  rep->add_option("--dir", dir, "output directory of a run")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run || *val) {
      dopf::ScenarioConfig cfg = dopf::load_config(config);
      if (!scenario.empty()) cfg.scenario = dopf::parse_scenario(scenario);
      if (seed >= 0) cfg.profiles.seed = static_cast<std::uint64_t>(seed);
      if (!out.empty()) cfg.out_dir = out;
      if (trace) cfg.trace = true;
      for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";
      const dopf::Instance inst = dopf::build_instance(cfg);
      if (*val) {
        std::printf("ok: scenario %s, %d buses, %zu prosumers, %d intervals of %.2f h\n",
                    dopf::to_string(cfg.scenario).c_str(), inst.feeder.num_buses(), inst.prosumers.size(),
                    inst.horizon.T, inst.horizon.dt);
        return 0;
      }
      const dopf::SolveReport r = dopf::run_scenario(cfg, inst);
      dopf::emit_outputs(r, cfg.out_dir);
      print_summary(r);
      std::printf("  outputs in %s\n", cfg.out_dir.c_str());
      if (!r.error.empty()) return 2;
      return r.converged ? 0 : 3;
    }
    if (*rep) {
      double diff = 0.0;
      const dopf::Metrics m = dopf::recompute_metrics(dir, &diff);
      std::printf("curtailment %.6f kWh, export %.6f kWh, objective %.6f $\n", m.curtailment_kwh, m.export_kwh,
                  m.objective);
      if (m.cv_mean) std::printf("mean CV %.6f over %d intervals\n", *m.cv_mean, m.cv_intervals);
      else std::printf("mean CV n/a\n");
      std::printf("over-voltage intervals %d, under-voltage intervals %d\n", m.over_voltage_intervals,
                  m.under_voltage_intervals);
      std::printf("largest difference from metrics.json: %.3g\n", diff);
      return diff <= 1e-9 ? 0 : 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
