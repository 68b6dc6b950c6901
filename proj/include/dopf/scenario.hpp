#pragma once

#include "dopf/admm.hpp"
#include "dopf/feeder.hpp"
#include "dopf/prosumer.hpp"
#include "dopf/prosumer_subproblem.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dopf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { A, B, C, D, E, F, G };

Scenario parse_scenario(const std::string& s);
std::string to_string(Scenario s);
bool is_coordinated(Scenario s);
/// Fairness mode implied by the scenario letter (none for A-D).
FairnessMode fairness_of(Scenario s);

enum class Topology { kLine, kTree, kFile };

struct FeederSource {
  Topology topology = Topology::kTree;
  std::string file;                    // when topology == kFile
  int prosumers = 5;
  std::uint64_t layout_seed = 1;
  Impedance hop{0.3, 0.1};             // ohms, before scaling
  double path_loading = 3.0;           // 0 keeps `hop` as given
  double base_voltage = 230.0;
  double base_power = 100.0;
  double v_min_volts = 216.0;
  double v_max_volts = 253.0;
  GenLimits gen_limits;
  double c0 = 0.0, c1 = 0.0;
  std::optional<double> c2;            // unset: 0.025 up to 25 prosumers, 0.015 above
  double grid_p_min = -15.0;           // per-household exchange limits, kW
  double grid_p_max = 15.0;
};

struct ProfileSource {
  std::string file;                    // empty: synthesize
  PvPenetration penetration = PvPenetration::kHigh;
  std::uint64_t seed = 1;
  int intervals = 48;
  double dt = 0.5;
};

struct TariffConfig {
  double off_peak = 0.12, shoulder = 0.22, peak = 0.52, fit = 0.10;
};

struct VvcConfig {
  double v1 = 216.0, v2 = 225.0, v3 = 244.0, v4 = 253.0;
  double q_ratio = 0.1;  // q_max as a fraction of the inverter rating
};

struct ScenarioConfig {
  Scenario scenario = Scenario::E;
  FeederSource feeder;
  ProfileSource profiles;
  BatterySpec battery;
  TariffConfig tariff;
  VvcConfig vvc;
  AdmmConfig admm;              // mode and fairness weight are filled from the scenario
  bool mu_from_mode = true;     // residual-balancing thresholds follow the fairness mode
  double alpha = 75.0;          // fairness weight for E/F/G
  double export_cap = 2.0;      // scenario B, kW
  int fixed_point_iter = 100;   // scenario B volt-var iteration
  bool baselines = false;       // also run C and D on the same instance for F deltas
  std::string out_dir = "out";
  bool trace = false;

  /// Throws ConfigError; returns warnings that do not stop a run.
  std::vector<std::string> validate() const;
};

ScenarioConfig read_config(std::istream& in, const std::string& origin = "<config>");
ScenarioConfig load_config(const std::string& path);
/// Every effective key, in a form read_config accepts.
void write_config(std::ostream& out, const ScenarioConfig& cfg);

/// Feeder, households and horizon built from a config.
struct Instance {
  FeederSpec feeder;
  HorizonSpec horizon;
  std::vector<ProsumerSpec> prosumers;  // index h = id - 1
};

Instance build_instance(const ScenarioConfig& cfg);

struct Metrics {
  double curtailment_kwh = 0.0;
  double export_kwh = 0.0;
  std::optional<double> cv_mean;  // absent when no daylight interval has curtailment
  int cv_intervals = 0;
  double objective = 0.0;  // generation cost plus household energy cost
  double generation_cost = 0.0;
  double prosumer_cost = 0.0;
  std::optional<double> f_pct_c, f_pct_d;
  std::vector<double> transformer_kw;  // p_g[t]
  int over_voltage_intervals = 0;
  int under_voltage_intervals = 0;
  double v_max = 0.0, v_min = 0.0;
};

struct VoltageViolation {
  int bus = 0;
  int t = 0;
  double v = 0.0;
};

struct SolveReport {
  ScenarioConfig config;
  Scenario scenario = Scenario::A;
  bool converged = false;
  int iterations = 0;
  std::string error;  // non-empty when the run stopped early
  double seconds = 0.0;
  double network_seconds = 0.0;
  double prosumer_seconds = 0.0;
  double parallel_seconds = 0.0;
  std::vector<IterationLog> history;
  std::vector<ProsumerDecision> schedules;
  std::vector<Profile> profiles;  // [h]
  Block v, theta;                 // [bus][t]
  std::vector<double> p_g, q_g;
  double max_coupling_gap = 0.0, mean_coupling_gap = 0.0;  // kW, network vs household copy
  NetworkObjective network_objective;
  Metrics metrics;
  std::vector<VoltageViolation> violations;
  std::shared_ptr<const AdmmReport> admm;  // final coordination state, C-G only
};

/// Inputs to the metric formulas; all recoverable from the emitted files.
struct MetricInputs {
  HorizonSpec horizon;
  std::vector<ProsumerSpec> prosumers;  // tariffs for the energy cost
  std::vector<ProsumerDecision> schedules;
  std::vector<double> p_g;
  GenCost gen_cost;
  Block v;
  std::vector<double> v_min, v_max;  // per bus
};

Metrics compute_metrics(const MetricInputs& in);
/// Mean over daylight intervals of std/mean of curtailment across households
/// able to export; `available` is p~_PV [h][t].
std::optional<double> mean_curtailment_cv(const Block& y, const Block& export_kw, const Block& available,
                                          int* intervals = nullptr);
std::vector<VoltageViolation> voltage_violations(const Block& v, const std::vector<double>& v_min,
                                                 const std::vector<double>& v_max, double tol = 0.0);

SolveReport run_scenario(const ScenarioConfig& cfg);
SolveReport run_scenario(const ScenarioConfig& cfg, const Instance& instance);

/// Writes residuals.csv, schedules.csv, voltages.csv, transformer.csv,
/// metrics.json and config_resolved.ini into `dir` (created if missing).
void emit_outputs(const SolveReport& report, const std::string& dir);

/// Recompute the metrics from an output directory and compare with its
/// metrics.json. Returns the recomputed block; `max_diff` gets the largest
/// absolute disagreement over the scalar fields.
Metrics recompute_metrics(const std::string& dir, double* max_diff = nullptr);

}  // namespace dopf
