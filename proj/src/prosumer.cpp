#include "dopf/prosumer.hpp"

#include "dopf/sectioned_text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dopf {

void HorizonSpec::validate() const {
  if (T < 1) throw ProsumerError("horizon needs at least one interval");
  if (!(dt > 0)) throw ProsumerError("interval length must be positive");
}

void BatterySpec::validate() const {
  if (!(0 <= soc_min && soc_min <= soc_initial && soc_initial <= soc_max && soc_max <= capacity))
    throw ProsumerError("battery: need 0 <= soc_min <= soc_initial <= soc_max <= capacity");
  if (!(p_ch_max > 0 && p_dis_max > 0)) throw ProsumerError("battery: rate limits must be positive");
  if (!(eta_ch > 0 && eta_ch <= 1 && eta_dis > 0 && eta_dis <= 1)) throw ProsumerError("battery: efficiencies must lie in (0, 1]");
}

TariffSpec::TariffSpec(std::vector<double> tou, double fit) : tou_(std::move(tou)), fit_(fit) {
  if (tou_.empty()) throw ProsumerError("tariff: empty time-of-use vector");
  const double lowest = *std::min_element(tou_.begin(), tou_.end());
  if (!(fit_ < lowest)) throw ProsumerError("tariff: feed-in price must be below every time-of-use price");
  if (fit_ < 0) throw ProsumerError("tariff: negative feed-in price");
}

TariffSpec TariffSpec::standard(const HorizonSpec& horizon, double off_peak, double shoulder, double peak, double fit) {
  horizon.validate();
  std::vector<double> tou(horizon.T);
  for (int t = 0; t < horizon.T; ++t) {
    // minutes after midnight at the end of the interval, wrapped to one day
    const long end = std::lround((t + 1) * horizon.dt * 60.0) % 1440;
    const long m = end == 0 ? 1440 : end;
    if (m > 7 * 60 && m <= 14 * 60) tou[t] = shoulder;
    else if (m > 14 * 60 && m < 20 * 60) tou[t] = peak;
    else if (m >= 20 * 60 && m <= 22 * 60 + 30) tou[t] = shoulder;
    else tou[t] = off_peak;
  }
  return TariffSpec(std::move(tou), fit);
}

double ProsumerSpec::reactive(double v_pu, double base_voltage) const {
  if (!vvc_enabled()) return 0.0;
  return evaluate(vvc, v_pu * base_voltage);
}

void ProsumerSpec::validate(const HorizonSpec& horizon) const {
  const std::string who = "prosumer " + std::to_string(id) + ": ";
  horizon.validate();
  if (static_cast<int>(demand.size()) != horizon.T || static_cast<int>(pv_avail.size()) != horizon.T)
    throw ProsumerError(who + "profile length differs from the horizon");
  if (static_cast<int>(tariff.tou().size()) != horizon.T) throw ProsumerError(who + "tariff length differs from the horizon");
  for (int t = 0; t < horizon.T; ++t) {
    if (!(demand[t] >= 0) || !(pv_avail[t] >= 0)) throw ProsumerError(who + "negative or non-finite profile value at t=" + std::to_string(t));
    if (pv_avail[t] > s_max + 1e-12) throw ProsumerError(who + "available PV exceeds the inverter rating at t=" + std::to_string(t));
  }
  try {
    battery.validate();
  } catch (const ProsumerError& e) {
    throw ProsumerError(who + e.what());
  }
  if (q_max < 0 || q_max > s_max) throw ProsumerError(who + "need 0 <= q_max <= s_max");
  if (vvc_enabled()) {
    try {
      vvc.validate();
    } catch (const std::invalid_argument& e) {
      throw ProsumerError(who + e.what());
    }
    if (vvc.q_max != q_max) throw ProsumerError(who + "VVC curve q_max differs from the prosumer q_max");
  }
  if (!(p_min <= 0 && p_max >= 0)) throw ProsumerError(who + "grid exchange bounds must bracket zero");
  if (!(export_cap > 0)) throw ProsumerError(who + "export cap must be positive");
}

SocTrajectory soc_trajectory(const BatterySpec& bat, const HorizonSpec& horizon, const std::vector<double>& charge,
                             const std::vector<double>& discharge) {
  horizon.validate();
  if (static_cast<int>(charge.size()) != horizon.T || static_cast<int>(discharge.size()) != horizon.T)
    throw ProsumerError("soc_trajectory: schedule length differs from the horizon");
  SocTrajectory out;
  out.soc.resize(horizon.T);
  double soc = bat.soc_initial;
  constexpr double tol = 1e-9;
  for (int t = 0; t < horizon.T; ++t) {
    if (charge[t] < 0 || discharge[t] < 0) throw ProsumerError("soc_trajectory: negative rate at t=" + std::to_string(t));
    soc += (bat.eta_ch * charge[t] - discharge[t] / bat.eta_dis) * horizon.dt;
    out.soc[t] = soc;
    if (out.feasible && (charge[t] > bat.p_ch_max + tol || discharge[t] > bat.p_dis_max + tol)) {
      out.feasible = false;
      out.violation = "rate limit exceeded at t=" + std::to_string(t);
    }
    if (out.feasible && (soc < bat.soc_min - tol || soc > bat.soc_max + tol)) {
      out.feasible = false;
      out.violation = "state of charge out of bounds at t=" + std::to_string(t);
    }
  }
  if (out.feasible && soc < bat.soc_initial - tol) {
    out.feasible = false;
    out.violation = "final state of charge below the initial state";
  }
  return out;
}

PvPenetration parse_penetration(const std::string& s) {
  if (s == "low") return PvPenetration::kLow;
  if (s == "medium") return PvPenetration::kMedium;
  if (s == "high") return PvPenetration::kHigh;
  throw ProsumerError("unknown PV penetration '" + s + "' (expected low, medium or high)");
}

std::string to_string(PvPenetration p) {
  switch (p) {
    case PvPenetration::kLow: return "low";
    case PvPenetration::kMedium: return "medium";
    case PvPenetration::kHigh: return "high";
  }
  return "unknown";
}

ProfileSet read_profiles(std::istream& in, const std::string& origin) {
  std::string line;
  int number = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++number;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next()) throw FormatError(origin + ": empty profile file");
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "t") throw FormatError(origin + ":1: first column must be 't'");
  if (header.size() < 3 || (header.size() - 1) % 2 != 0) throw FormatError(origin + ":1: expected demand/pv column pairs");

  std::vector<int> ids;
  for (std::size_t c = 1; c < header.size(); c += 2) {
    const std::string& d = header[c];
    const std::string& p = header[c + 1];
    const auto us = d.find('_');
    if (us == std::string::npos || d.substr(us) != "_demand_kw") throw FormatError(origin + ":1: bad column '" + d + "'");
    const std::string id_text = d.substr(0, us);
    if (p != id_text + "_pv_kw") throw FormatError(origin + ":1: expected '" + id_text + "_pv_kw', got '" + p + "'");
    ids.push_back(parse_int(id_text, origin + ":1"));
  }
  ProfileSet out;
  for (int id : ids)
    if (!out.emplace(id, Profile{}).second) throw FormatError(origin + ":1: prosumer " + std::to_string(id) + " listed twice");

  int row = 0;
  while (next()) {
    const auto cols = split(line, ',');
    const std::string ctx = origin + ":" + std::to_string(number);
    if (cols.size() != header.size()) throw FormatError(ctx + ": expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cols.size()));
    if (parse_int(cols[0], ctx) != row) throw FormatError(ctx + ": interval index out of sequence");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const double d = parse_double(cols[1 + 2 * k], ctx);
      const double p = parse_double(cols[2 + 2 * k], ctx);
      if (!(d >= 0)) throw FormatError(ctx + ": negative demand in column " + header[1 + 2 * k]);
      if (!(p >= 0)) throw FormatError(ctx + ": negative PV in column " + header[2 + 2 * k]);
      out[ids[k]].demand.push_back(d);
      out[ids[k]].pv.push_back(p);
    }
    ++row;
  }
  if (row == 0) throw FormatError(origin + ": no data rows");
  return out;
}

ProfileSet load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open profile file '" + path + "'");
  return read_profiles(in, path);
}

void write_profiles(std::ostream& out, const ProfileSet& profiles) {
  if (profiles.empty()) throw FormatError("no profiles to write");
  const std::size_t T = profiles.begin()->second.demand.size();
  out << "t";
  for (const auto& [id, prof] : profiles) {
    if (prof.demand.size() != T || prof.pv.size() != T) throw FormatError("profiles have unequal lengths");
    out << "," << id << "_demand_kw," << id << "_pv_kw";
  }
  out << "\n";
  for (std::size_t t = 0; t < T; ++t) {
    out << t;
    for (const auto& [id, prof] : profiles) out << "," << format_exact(prof.demand[t]) << "," << format_exact(prof.pv[t]);
    out << "\n";
  }
}

void save_profiles(const std::string& path, const ProfileSet& profiles) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write profile file '" + path + "'");
  write_profiles(out, profiles);
  if (!out) throw FormatError("write failed for '" + path + "'");
}

double nominal_kwp(PvPenetration p) {
  switch (p) {
    case PvPenetration::kLow: return 1.5;
    case PvPenetration::kMedium: return 3.0;
    case PvPenetration::kHigh: return 10.0;
  }
  return 0.0;
}

ProfileSet synthesize_profiles(int n, const HorizonSpec& horizon, PvPenetration penetration, std::uint64_t seed) {
  if (n < 1) throw ProsumerError("synthesize_profiles: need at least one prosumer");
  horizon.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };
  auto bump = [](double x, double centre, double width) { return std::exp(-0.5 * std::pow((x - centre) / width, 2)); };

  ProfileSet out;
  for (int id = 1; id <= n; ++id) {
    Profile prof;
    const double load_scale = between(0.6, 1.4);
    const double morning = between(6.75, 8.0);
    const double evening = between(18.0, 20.0);
    const double kwp = nominal_kwp(penetration) * between(0.7, 1.3);
    const double sunrise = between(5.75, 6.5);
    const double sunset = between(18.25, 19.25);
    const double tilt = between(-0.75, 0.75);  // orientation shifts the peak
    for (int t = 0; t < horizon.T; ++t) {
      const double hour = std::fmod((t + 0.5) * horizon.dt, 24.0);
      double d = 0.3 + 0.8 * bump(hour, morning, 1.0) + 1.5 * bump(hour, evening, 1.5) + 0.2 * bump(hour, 13.0, 3.0);
      d *= load_scale * between(0.9, 1.1);
      prof.demand.push_back(d);
      double pv = 0.0;
      if (hour > sunrise && hour < sunset) {
        const double mid = 0.5 * (sunrise + sunset) + tilt;
        const double x = hour < mid ? (hour - sunrise) / (mid - sunrise) : (sunset - hour) / (sunset - mid);
        pv = kwp * 0.9 * std::pow(std::sin(0.5 * std::numbers::pi * std::clamp(x, 0.0, 1.0)), 1.5);
      }
      prof.pv.push_back(pv);
    }
    out.emplace(id, std::move(prof));
  }
  return out;
}

}  // namespace dopf
