#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

class FeederError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bus {
  int id = 0;
  bool is_slack = false;
  std::optional<int> prosumer;
  double v_min = 216.0 / 230.0;
  double v_max = 253.0 / 230.0;
};

/// Series admittance of a line section, per unit.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double g = 0.0;
  double b = 0.0;
};

struct GenCost {
  double c0 = 0.0;  // $
  double c1 = 0.0;  // $/kW
  double c2 = 0.025;  // $/kW^2
};

/// Slack-bus injection limits in kW / kVAr.
struct GenLimits {
  double p_min = -1e4;
  double p_max = 1e4;
  double q_min = -1e4;
  double q_max = 1e4;
};

struct VoltageLimits {
  double v_min = 216.0 / 230.0;
  double v_max = 253.0 / 230.0;
};

struct Admittance {
  double g = 0.0;
  double b = 0.0;
};

/// Series impedance in ohms.
struct Impedance {
  double r = 0.0;
  double x = 0.0;
};

struct FeederSpec {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  double base_voltage = 230.0;  // V
  double base_power = 100.0;    // kVA
  GenCost gen_cost;
  GenLimits gen_limits;

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_prosumers() const;
  /// Bus index hosting prosumer id h (ids run 1..H), indexed by h - 1.
  std::vector<int> prosumer_buses() const;
  double base_impedance() const { return base_voltage * base_voltage / (base_power * 1000.0); }
};

/// Throws FeederError describing the first violated invariant.
void validate(const FeederSpec& spec);

/// Chain 0 - 1 - ... - n with prosumer i on bus i.
FeederSpec build_line_topology(int n_prosumers, Admittance per_hop, VoltageLimits limits = {});

/// Tree layout given as a parent array: parent[k] is the upstream bus of bus k + 1.
struct SpurConfig {
  std::vector<int> parent;
};

/// A spur is a chain of `length` buses hanging off bus `attach`. Buses are
/// numbered in the order the spurs are listed.
struct Spur {
  int attach = 0;
  int length = 0;
};

SpurConfig spurs_to_config(const std::vector<Spur>& spurs);

/// Main trunk with 3 to 5 lateral spurs of roughly equal length; the spur
/// count and attachment points are drawn from `seed`. Fewer than 4
/// prosumers give a plain chain.
SpurConfig default_spur_layout(int n_prosumers, std::uint64_t seed = 1);

/// Every non-slack bus hosts the prosumer with the same index.
FeederSpec build_tree_topology(int n_prosumers, const SpurConfig& spurs, Admittance per_hop,
                               VoltageLimits limits = {});

Admittance impedance_to_admittance(Impedance z_pu);
Impedance admittance_to_impedance(Admittance y_pu);

/// Replace branch admittances with the per-unit image of `ohms` (one entry
/// per branch) on the feeder's bases.
FeederSpec to_per_unit(const FeederSpec& spec, const std::vector<Impedance>& ohms);
std::vector<Impedance> from_per_unit(const FeederSpec& spec);

/// Per-hop series impedance (ohms) rescaled so that on the most loaded
/// path, sum over hops of (number of downstream prosumers x hop resistance)
/// equals `loading` per unit. Reactance keeps the x/r ratio of `hop`.
Impedance scaled_hop_impedance(const FeederSpec& spec, Impedance hop, double loading);

/// Number of prosumers at or below each bus.
std::vector<int> downstream_prosumers(const FeederSpec& spec);

FeederSpec read_feeder(std::istream& in, const std::string& origin = "<feeder>");
FeederSpec load_feeder(const std::string& path);
void write_feeder(std::ostream& out, const FeederSpec& spec);
void save_feeder(const std::string& path, const FeederSpec& spec);

/// Sparse bus admittance matrix Y = G + jB, stored row by row.
struct BusAdmittance {
  struct Entry {
    int col;
    double g;
    double b;
  };
  std::vector<std::vector<Entry>> rows;  // diagonal entry first
};

BusAdmittance build_admittance(const FeederSpec& spec);

}  // namespace dopf
