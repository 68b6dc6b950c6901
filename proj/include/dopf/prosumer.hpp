#pragma once

#include "dopf/vvc.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

class ProsumerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HorizonSpec {
  int T = 48;
  double dt = 0.5;  // hours

  void validate() const;
};

struct BatterySpec {
  double capacity = 7.5;   // kWh
  double soc_min = 0.0;
  double soc_max = 7.5;
  double p_ch_max = 3.75;  // kW
  double p_dis_max = 3.75;
  double eta_ch = 0.92;
  double eta_dis = 0.92;
  double soc_initial = 3.0;

  void validate() const;
};

/// Time-of-use purchase price per interval and a flat feed-in price, both
/// in $/kWh. Construction enforces fit < min(tou).
class TariffSpec {
 public:
  TariffSpec(std::vector<double> tou, double fit);

  /// Off-peak 0.12 / shoulder 0.22 / peak 0.52 bands with FiT 0.10. Interval
  /// t covers (t*dt, (t+1)*dt] hours after midnight and takes the band of
  /// its end time.
  static TariffSpec standard(const HorizonSpec& horizon, double off_peak = 0.12, double shoulder = 0.22,
                             double peak = 0.52, double fit = 0.10);

  const std::vector<double>& tou() const { return tou_; }
  double tou(int t) const { return tou_[t]; }
  double fit() const { return fit_; }

 private:
  std::vector<double> tou_;
  double fit_;
};

struct ProsumerSpec {
  int id = 1;
  std::vector<double> demand;    // kW
  std::vector<double> pv_avail;  // kW
  BatterySpec battery;
  TariffSpec tariff{std::vector<double>{0.12}, 0.10};
  double s_max = 0.0;  // inverter kVA
  double q_max = 0.0;  // kVAr; 0 disables reactive support
  VvcCurve vvc;
  double p_min = -15.0;  // kW, grid exchange
  double p_max = 15.0;
  double export_cap = std::numeric_limits<double>::infinity();  // limit on p_minus

  bool vvc_enabled() const { return q_max > 0; }
  /// VVC reactive output for a per-unit voltage.
  double reactive(double v_pu, double base_voltage) const;
  void validate(const HorizonSpec& horizon) const;
};

struct SocTrajectory {
  std::vector<double> soc;  // soc[t] after interval t
  bool feasible = true;
  std::string violation;
};

/// SoC recursion from the initial state; flags bound or terminal violations.
SocTrajectory soc_trajectory(const BatterySpec& battery, const HorizonSpec& horizon,
                             const std::vector<double>& charge, const std::vector<double>& discharge);

struct Profile {
  std::vector<double> demand;
  std::vector<double> pv;
};

using ProfileSet = std::map<int, Profile>;

enum class PvPenetration { kLow, kMedium, kHigh };

PvPenetration parse_penetration(const std::string& s);
std::string to_string(PvPenetration p);

/// Profile CSV: header `t,<id>_demand_kw,<id>_pv_kw,...`, one row per interval.
ProfileSet read_profiles(std::istream& in, const std::string& origin = "<profiles>");
ProfileSet load_profiles(const std::string& path);
void write_profiles(std::ostream& out, const ProfileSet& profiles);
void save_profiles(const std::string& path, const ProfileSet& profiles);

/// Seeded synthetic day: double-peaked demand and a bell-shaped PV curve
/// with per-prosumer size, timing and shape jitter. Prosumer ids 1..n.
ProfileSet synthesize_profiles(int n, const HorizonSpec& horizon, PvPenetration penetration, std::uint64_t seed);

/// Nominal PV system size (kWp) for a penetration level.
double nominal_kwp(PvPenetration p);

}  // namespace dopf
