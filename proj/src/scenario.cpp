#include "dopf/scenario.hpp"

#include "dopf/power_flow.hpp"
#include "dopf/sectioned_text.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace dopf {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point s) { return std::chrono::duration<double>(Clock::now() - s).count(); }

// curtailment below this (kW) counts as none when forming dispersion ratios
constexpr double kCvFloor = 1e-3;
constexpr double kExportFloor = 1e-6;

// Key/value reader that rejects keys nobody asked for.
class Section {
 public:
  Section(const SectionedText& doc, const std::string& name) : name_(name), origin_(doc.origin()) {
    if (doc.has(name)) kv_ = doc.pairs(name);
  }

  bool get(const std::string& key, std::string& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    out = it->second;
    kv_.erase(it);
    return true;
  }
  void num(const std::string& key, double& out) {
    std::string s;
    if (get(key, s)) out = parse_double(s, ctx(key));
  }
  void integer(const std::string& key, int& out) {
    std::string s;
    if (get(key, s)) out = parse_int(s, ctx(key));
  }
  void seed(const std::string& key, std::uint64_t& out) {
    std::string s;
    if (!get(key, s)) return;
    try {
      std::size_t used = 0;
      out = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(ctx(key) + ": expected a non-negative integer, got '" + s + "'");
    }
  }
  void flag(const std::string& key, bool& out) {
    std::string s;
    if (get(key, s)) out = parse_bool(s, ctx(key));
  }
  void finish() const {
    if (!kv_.empty()) throw ConfigError(origin_ + ": unknown key '" + kv_.begin()->first + "' in [" + name_ + "]");
  }
  std::string ctx(const std::string& key) const { return origin_ + ": [" + name_ + "] " + key; }

 private:
  std::string name_, origin_;
  std::map<std::string, std::string> kv_;
};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Topology parse_topology(const std::string& s) {
  const auto v = lower(s);
  if (v == "line") return Topology::kLine;
  if (v == "tree") return Topology::kTree;
  if (v == "file") return Topology::kFile;
  throw ConfigError("unknown topology '" + s + "' (line, tree or file)");
}

std::string topology_name(Topology t) {
  switch (t) {
    case Topology::kLine: return "line";
    case Topology::kTree: return "tree";
    case Topology::kFile: return "file";
  }
  return "?";
}

Execution parse_execution(const std::string& s) {
  const auto v = lower(s);
  if (v == "serial") return Execution::kSerial;
  if (v == "parallel") return Execution::kParallel;
  throw ConfigError("unknown execution '" + s + "' (serial or parallel)");
}

std::string resolve_path(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal().string();
}

double default_c2(int prosumers) { return prosumers <= 25 ? 0.025 : 0.015; }

std::vector<double> pv_of(const ProsumerDecision& d) {
  std::vector<double> a(d.p_pv.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = d.p_pv[t] + d.y[t];
  return a;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace

Scenario parse_scenario(const std::string& s) {
  if (s.size() == 1) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (c >= 'A' && c <= 'G') return static_cast<Scenario>(c - 'A');
  }
  throw ConfigError("unknown scenario '" + s + "' (A to G)");
}

std::string to_string(Scenario s) { return std::string(1, static_cast<char>('A' + static_cast<int>(s))); }

bool is_coordinated(Scenario s) { return s != Scenario::A && s != Scenario::B; }

FairnessMode fairness_of(Scenario s) {
  switch (s) {
    case Scenario::E: return FairnessMode::kEgalitarian;
    case Scenario::F: return FairnessMode::kProportional;
    case Scenario::G: return FairnessMode::kUniformDynamic;
    default: return FairnessMode::kNone;
  }
}

std::vector<std::string> ScenarioConfig::validate() const {
  std::vector<std::string> warnings;
  if (feeder.topology == Topology::kFile) {
    if (feeder.file.empty()) throw ConfigError("[feeder] topology = file needs a file");
  } else if (feeder.prosumers < 1) {
    throw ConfigError("[feeder] prosumers must be at least 1");
  }
  if (!(feeder.base_voltage > 0 && feeder.base_power > 0)) throw ConfigError("[feeder] bases must be positive");
  if (!(feeder.v_min_volts > 0 && feeder.v_min_volts < feeder.v_max_volts))
    throw ConfigError("[feeder] need 0 < v_min_volts < v_max_volts");
  if (feeder.path_loading < 0) throw ConfigError("[feeder] path_loading must be >= 0");
  if (!(feeder.hop.r >= 0 && feeder.hop.x >= 0) || (feeder.hop.r == 0 && feeder.hop.x == 0))
    throw ConfigError("[feeder] hop impedance must be non-negative and non-zero");
  if (feeder.c2 && *feeder.c2 < 0) throw ConfigError("[feeder] c2 must be >= 0");
  if (!(feeder.grid_p_min <= 0 && feeder.grid_p_max >= 0)) throw ConfigError("[feeder] grid limits must bracket zero");
  HorizonSpec{profiles.intervals, profiles.dt}.validate();
  try {
    battery.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[battery] ") + e.what());
  }
  try {
    TariffSpec::standard(HorizonSpec{profiles.intervals, profiles.dt}, tariff.off_peak, tariff.shoulder, tariff.peak,
                         tariff.fit);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[tariff] ") + e.what());
  }
  if (!(vvc.v1 < vvc.v2 && vvc.v2 <= vvc.v3 && vvc.v3 < vvc.v4)) throw ConfigError("[vvc] need v1 < v2 <= v3 < v4");
  if (!(vvc.q_ratio >= 0 && vvc.q_ratio < 1)) throw ConfigError("[vvc] q_ratio must be in [0, 1)");
  try {
    admm.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[admm] ") + e.what());
  }
  if (alpha < 0) throw ConfigError("[fairness] alpha must be >= 0");
  if (scenario == Scenario::B && !(export_cap > 0)) throw ConfigError("[scenario] export_cap must be positive for B");
  if (fixed_point_iter < 1) throw ConfigError("[scenario] fixed_point_iter must be at least 1");
  if (fairness_of(scenario) != FairnessMode::kNone && profiles.file.empty() &&
      profiles.penetration != PvPenetration::kHigh)
    warnings.push_back("fairness scenarios are only meaningful with high PV penetration");
  if (fairness_of(scenario) != FairnessMode::kNone && alpha == 0)
    warnings.push_back("alpha = 0 switches the fairness term off");
  return warnings;
}

ScenarioConfig read_config(std::istream& in, const std::string& origin) {
  const SectionedText doc = SectionedText::parse(in, origin);
  static const std::vector<std::string> known = {"scenario", "feeder", "profiles", "battery",
                                                 "tariff",   "vvc",    "admm",     "fairness"};
  for (const auto& s : doc.section_names())
    if (std::find(known.begin(), known.end(), s) == known.end())
      throw ConfigError(origin + ": unknown section [" + s + "]");
  const fs::path base = origin.empty() || origin[0] == '<' ? fs::path() : fs::path(origin).parent_path();

  ScenarioConfig c;
  std::string s;
  {
    Section sec(doc, "scenario");
    if (sec.get("name", s)) c.scenario = parse_scenario(s);
    sec.num("export_cap", c.export_cap);
    sec.integer("fixed_point_iter", c.fixed_point_iter);
    sec.flag("baselines", c.baselines);
    if (sec.get("out", s)) c.out_dir = resolve_path(s, base);
    sec.flag("trace", c.trace);
    if (sec.get("execution", s)) c.admm.execution = parse_execution(s);
    sec.finish();
  }
  {
    Section sec(doc, "feeder");
    auto& f = c.feeder;
    if (sec.get("topology", s)) f.topology = parse_topology(s);
    if (sec.get("file", s)) f.file = resolve_path(s, base);
    sec.integer("prosumers", f.prosumers);
    sec.seed("layout_seed", f.layout_seed);
    sec.num("r_ohm", f.hop.r);
    sec.num("x_ohm", f.hop.x);
    sec.num("path_loading", f.path_loading);
    sec.num("base_voltage", f.base_voltage);
    sec.num("base_power", f.base_power);
    sec.num("v_min_volts", f.v_min_volts);
    sec.num("v_max_volts", f.v_max_volts);
    sec.num("gen_p_min", f.gen_limits.p_min);
    sec.num("gen_p_max", f.gen_limits.p_max);
    sec.num("gen_q_min", f.gen_limits.q_min);
    sec.num("gen_q_max", f.gen_limits.q_max);
    sec.num("c0", f.c0);
    sec.num("c1", f.c1);
    if (sec.get("c2", s) && lower(s) != "auto") f.c2 = parse_double(s, sec.ctx("c2"));
    sec.num("grid_p_min", f.grid_p_min);
    sec.num("grid_p_max", f.grid_p_max);
    sec.finish();
  }
  {
    Section sec(doc, "profiles");
    auto& p = c.profiles;
    if (sec.get("file", s)) p.file = resolve_path(s, base);
    if (sec.get("penetration", s)) {
      try {
        p.penetration = parse_penetration(s);
      } catch (const std::exception& e) {
        throw ConfigError(sec.ctx("penetration") + ": " + e.what());
      }
    }
    sec.seed("seed", p.seed);
    sec.integer("intervals", p.intervals);
    sec.num("dt", p.dt);
    sec.finish();
  }
  {
    Section sec(doc, "battery");
    auto& b = c.battery;
    sec.num("capacity", b.capacity);
    sec.num("soc_min", b.soc_min);
    sec.num("soc_max", b.soc_max);
    sec.num("p_ch_max", b.p_ch_max);
    sec.num("p_dis_max", b.p_dis_max);
    sec.num("eta_ch", b.eta_ch);
    sec.num("eta_dis", b.eta_dis);
    sec.num("soc_initial", b.soc_initial);
    sec.finish();
  }
  {
    Section sec(doc, "tariff");
    sec.num("off_peak", c.tariff.off_peak);
    sec.num("shoulder", c.tariff.shoulder);
    sec.num("peak", c.tariff.peak);
    sec.num("fit", c.tariff.fit);
    sec.finish();
  }
  {
    Section sec(doc, "vvc");
    sec.num("v1", c.vvc.v1);
    sec.num("v2", c.vvc.v2);
    sec.num("v3", c.vvc.v3);
    sec.num("v4", c.vvc.v4);
    sec.num("q_ratio", c.vvc.q_ratio);
    sec.finish();
  }
  {
    Section sec(doc, "admm");
    auto& a = c.admm;
    sec.num("eps_abs", a.eps_abs);
    sec.num("eps_rel", a.eps_rel);
    sec.num("tau_incr", a.tau_incr);
    sec.num("tau_decr", a.tau_decr);
    std::string mi, md;
    const bool has_mi = sec.get("mu_incr", mi), has_md = sec.get("mu_decr", md);
    if (has_mi != has_md) throw ConfigError(origin + ": [admm] mu_incr and mu_decr go together");
    if (has_mi && !(lower(mi) == "auto" && lower(md) == "auto")) {
      a.mu_incr = parse_double(mi, sec.ctx("mu_incr"));
      a.mu_decr = parse_double(md, sec.ctx("mu_decr"));
      c.mu_from_mode = false;
    }
    sec.num("rho_init", a.rho_init);
    sec.integer("max_iter", a.max_iter);
    sec.num("beta", a.weights.beta);
    sec.num("gamma", a.weights.gamma);
    sec.num("nlp_tol", a.nlp.tol);
    sec.integer("nlp_max_iter", a.nlp.max_iter);
    sec.flag("verify", a.verify);
    sec.finish();
  }
  {
    Section sec(doc, "fairness");
    sec.num("alpha", c.alpha);
    sec.finish();
  }
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return read_config(in, path);
}

void write_config(std::ostream& out, const ScenarioConfig& c) {
  auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << "\n"; };
  auto num = [&](const char* k, double v) { kv(k, format_exact(v)); };
  out << "[scenario]\n";
  kv("name", to_string(c.scenario));
  num("export_cap", c.export_cap);
  kv("fixed_point_iter", std::to_string(c.fixed_point_iter));
  kv("baselines", c.baselines ? "true" : "false");
  kv("out", c.out_dir);
  kv("trace", c.trace ? "true" : "false");
  kv("execution", c.admm.execution == Execution::kSerial ? "serial" : "parallel");

  const auto& f = c.feeder;
  out << "\n[feeder]\n";
  kv("topology", topology_name(f.topology));
  if (!f.file.empty()) kv("file", f.file);
  kv("prosumers", std::to_string(f.prosumers));
  kv("layout_seed", std::to_string(f.layout_seed));
  num("r_ohm", f.hop.r);
  num("x_ohm", f.hop.x);
  num("path_loading", f.path_loading);
  num("base_voltage", f.base_voltage);
  num("base_power", f.base_power);
  num("v_min_volts", f.v_min_volts);
  num("v_max_volts", f.v_max_volts);
  num("gen_p_min", f.gen_limits.p_min);
  num("gen_p_max", f.gen_limits.p_max);
  num("gen_q_min", f.gen_limits.q_min);
  num("gen_q_max", f.gen_limits.q_max);
  num("c0", f.c0);
  num("c1", f.c1);
  kv("c2", f.c2 ? format_exact(*f.c2) : "auto");
  num("grid_p_min", f.grid_p_min);
  num("grid_p_max", f.grid_p_max);

  out << "\n[profiles]\n";
  if (!c.profiles.file.empty()) kv("file", c.profiles.file);
  kv("penetration", to_string(c.profiles.penetration));
  kv("seed", std::to_string(c.profiles.seed));
  kv("intervals", std::to_string(c.profiles.intervals));
  num("dt", c.profiles.dt);

  const auto& b = c.battery;
  out << "\n[battery]\n";
  num("capacity", b.capacity);
  num("soc_min", b.soc_min);
  num("soc_max", b.soc_max);
  num("p_ch_max", b.p_ch_max);
  num("p_dis_max", b.p_dis_max);
  num("eta_ch", b.eta_ch);
  num("eta_dis", b.eta_dis);
  num("soc_initial", b.soc_initial);

  out << "\n[tariff]\n";
  num("off_peak", c.tariff.off_peak);
  num("shoulder", c.tariff.shoulder);
  num("peak", c.tariff.peak);
  num("fit", c.tariff.fit);

  out << "\n[vvc]\n";
  num("v1", c.vvc.v1);
  num("v2", c.vvc.v2);
  num("v3", c.vvc.v3);
  num("v4", c.vvc.v4);
  num("q_ratio", c.vvc.q_ratio);

  const auto& a = c.admm;
  out << "\n[admm]\n";
  num("eps_abs", a.eps_abs);
  num("eps_rel", a.eps_rel);
  num("tau_incr", a.tau_incr);
  num("tau_decr", a.tau_decr);
  if (c.mu_from_mode) {
    kv("mu_incr", "auto");
    kv("mu_decr", "auto");
  } else {
    num("mu_incr", a.mu_incr);
    num("mu_decr", a.mu_decr);
  }
  num("rho_init", a.rho_init);
  kv("max_iter", std::to_string(a.max_iter));
  num("beta", a.weights.beta);
  num("gamma", a.weights.gamma);
  num("nlp_tol", a.nlp.tol);
  kv("nlp_max_iter", std::to_string(a.nlp.max_iter));
  kv("verify", a.verify ? "true" : "false");

  out << "\n[fairness]\n";
  num("alpha", c.alpha);
}

Instance build_instance(const ScenarioConfig& cfg) {
  cfg.validate();
  Instance inst;
  inst.horizon = {cfg.profiles.intervals, cfg.profiles.dt};
  const auto& f = cfg.feeder;

  if (f.topology == Topology::kFile) {
    inst.feeder = load_feeder(f.file);
    if (f.c2) inst.feeder.gen_cost.c2 = *f.c2;
  } else {
    const VoltageLimits lim{f.v_min_volts / f.base_voltage, f.v_max_volts / f.base_voltage};
    const Admittance unit{1.0, 0.0};
    FeederSpec spec = f.topology == Topology::kLine
                          ? build_line_topology(f.prosumers, unit, lim)
                          : build_tree_topology(f.prosumers, default_spur_layout(f.prosumers, f.layout_seed), unit, lim);
    spec.base_voltage = f.base_voltage;
    spec.base_power = f.base_power;
    const Impedance hop = f.path_loading > 0 ? scaled_hop_impedance(spec, f.hop, f.path_loading) : f.hop;
    spec = to_per_unit(spec, std::vector<Impedance>(spec.branches.size(), hop));
    spec.gen_limits = f.gen_limits;
    spec.gen_cost = {f.c0, f.c1, f.c2 ? *f.c2 : default_c2(f.prosumers)};
    inst.feeder = std::move(spec);
  }
  validate(inst.feeder);
  const int H = inst.feeder.num_prosumers();

  ProfileSet profiles = cfg.profiles.file.empty()
                            ? synthesize_profiles(H, inst.horizon, cfg.profiles.penetration, cfg.profiles.seed)
                            : load_profiles(cfg.profiles.file);
  const TariffSpec tariff = TariffSpec::standard(inst.horizon, cfg.tariff.off_peak, cfg.tariff.shoulder,
                                                 cfg.tariff.peak, cfg.tariff.fit);
  const bool reactive = cfg.scenario != Scenario::A && cfg.scenario != Scenario::C;
  for (int id = 1; id <= H; ++id) {
    auto it = profiles.find(id);
    if (it == profiles.end()) throw ConfigError("profiles: no data for prosumer " + std::to_string(id));
    const Profile& pr = it->second;
    if (static_cast<int>(pr.demand.size()) != inst.horizon.T)
      throw ConfigError("profiles: prosumer " + std::to_string(id) + " has " + std::to_string(pr.demand.size()) +
                        " intervals, horizon is " + std::to_string(inst.horizon.T));
    ProsumerSpec p;
    p.id = id;
    p.demand = pr.demand;
    p.pv_avail = pr.pv;
    p.battery = cfg.battery;
    p.tariff = tariff;
    p.s_max = *std::max_element(pr.pv.begin(), pr.pv.end());
    p.q_max = reactive ? cfg.vvc.q_ratio * p.s_max : 0.0;
    p.vvc = {cfg.vvc.v1, cfg.vvc.v2, cfg.vvc.v3, cfg.vvc.v4, p.q_max};
    p.p_min = f.grid_p_min;
    p.p_max = f.grid_p_max;
    if (cfg.scenario == Scenario::B) p.export_cap = cfg.export_cap;
    p.validate(inst.horizon);
    inst.prosumers.push_back(std::move(p));
  }
  if (static_cast<int>(profiles.size()) != H)
    throw ConfigError("profiles: " + std::to_string(profiles.size()) + " prosumers in the data, feeder has " +
                      std::to_string(H));
  return inst;
}

std::optional<double> mean_curtailment_cv(const Block& y, const Block& export_kw, const Block& available,
                                          int* intervals) {
  const int H = static_cast<int>(y.size());
  const int T = H ? static_cast<int>(y.front().size()) : 0;
  double sum = 0.0;
  int count = 0;
  for (int t = 0; t < T; ++t) {
    double sun = 0.0;
    for (int h = 0; h < H; ++h) sun += available[h][t];
    if (!(sun > 0)) continue;
    std::vector<double> ys;
    for (int h = 0; h < H; ++h)
      if (export_kw[h][t] + y[h][t] > kExportFloor) ys.push_back(y[h][t]);
    if (ys.empty()) continue;
    const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    if (!(mean > kCvFloor)) continue;
    double var = 0.0;
    for (double v : ys) var += (v - mean) * (v - mean);
    sum += std::sqrt(var / static_cast<double>(ys.size())) / mean;
    ++count;
  }
  if (intervals) *intervals = count;
  if (count == 0) return std::nullopt;
  return sum / count;
}

std::vector<VoltageViolation> voltage_violations(const Block& v, const std::vector<double>& v_min,
                                                 const std::vector<double>& v_max, double tol) {
  std::vector<VoltageViolation> out;
  for (std::size_t b = 0; b < v.size(); ++b)
    for (std::size_t t = 0; t < v[b].size(); ++t)
      if (v[b][t] > v_max[b] + tol || v[b][t] < v_min[b] - tol)
        out.push_back({static_cast<int>(b), static_cast<int>(t), v[b][t]});
  return out;
}

Metrics compute_metrics(const MetricInputs& in) {
  Metrics m;
  const int H = static_cast<int>(in.schedules.size());
  const int T = in.horizon.T;
  Block y(H), ex(H), avail(H);
  for (int h = 0; h < H; ++h) {
    const auto& d = in.schedules[h];
    y[h] = d.y;
    ex[h] = d.p_minus;
    avail[h] = pv_of(d);
    for (int t = 0; t < T; ++t) {
      m.curtailment_kwh += d.y[t] * in.horizon.dt;
      m.export_kwh += d.p_minus[t] * in.horizon.dt;
    }
    m.prosumer_cost += energy_cost(in.prosumers[h], in.horizon, d.p_plus, d.p_minus);
  }
  m.cv_mean = mean_curtailment_cv(y, ex, avail, &m.cv_intervals);
  for (double pg : in.p_g) {
    const double pp = std::max(pg, 0.0);
    m.generation_cost += in.gen_cost.c2 * pp * pp + in.gen_cost.c1 * pp + in.gen_cost.c0;
  }
  m.objective = m.generation_cost + m.prosumer_cost;
  m.transformer_kw = in.p_g;

  m.v_max = -1e300;
  m.v_min = 1e300;
  for (int t = 0; t < T; ++t) {
    bool over = false, under = false;
    for (std::size_t b = 0; b < in.v.size(); ++b) {
      const double v = in.v[b][t];
      m.v_max = std::max(m.v_max, v);
      m.v_min = std::min(m.v_min, v);
      over = over || v > in.v_max[b];
      under = under || v < in.v_min[b];
    }
    m.over_voltage_intervals += over;
    m.under_voltage_intervals += under;
  }
  if (in.v.empty()) m.v_max = m.v_min = 0.0;
  return m;
}

namespace {

MetricInputs inputs_for(const Instance& inst, const SolveReport& rep) {
  MetricInputs mi;
  mi.horizon = inst.horizon;
  mi.prosumers = inst.prosumers;
  mi.schedules = rep.schedules;
  mi.p_g = rep.p_g;
  mi.gen_cost = inst.feeder.gen_cost;
  mi.v = rep.v;
  for (const auto& b : inst.feeder.buses) {
    mi.v_min.push_back(b.v_min);
    mi.v_max.push_back(b.v_max);
  }
  return mi;
}

// Uncoordinated households: schedules with fixed q, then a load flow per interval.
void evaluate_flows(const Instance& inst, const std::vector<ProsumerDecision>& sched, SolveReport& rep) {
  const int T = inst.horizon.T, nb = inst.feeder.num_buses();
  const auto buses = inst.feeder.prosumer_buses();
  const double S = inst.feeder.base_power;
  rep.v = zero_block(nb, T);
  rep.theta = zero_block(nb, T);
  rep.p_g.assign(T, 0.0);
  rep.q_g.assign(T, 0.0);
  std::vector<std::string> errors(T);
  const bool parallel = rep.config.admm.execution == Execution::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int t = 0; t < T; ++t) {
    std::vector<double> p(nb, 0.0), q(nb, 0.0);
    for (std::size_t h = 0; h < sched.size(); ++h) {
      p[buses[h]] -= sched[h].p[t] / S;
      q[buses[h]] += sched[h].q[t] / S;
    }
    const auto pf = solve_power_flow(inst.feeder, p, q);
    if (!pf.converged) {
      errors[t] = "load flow did not converge at t = " + std::to_string(t);
      continue;
    }
    for (int b = 0; b < nb; ++b) {
      rep.v[b][t] = pf.v[b];
      rep.theta[b][t] = pf.theta[b];
    }
    rep.p_g[t] = pf.p_slack * S;
    rep.q_g[t] = pf.q_slack * S;
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
}

std::vector<ProsumerDecision> solve_households(const Instance& inst, const std::vector<ProsumerCoupling>& cps,
                                               Execution ex) {
  std::vector<ProsumerDecision> out;
  for (auto& s : solve_all(inst.prosumers, inst.horizon, cps, ex)) out.push_back(std::move(s.decision));
  return out;
}

void run_uncoordinated(const Instance& inst, SolveReport& rep) {
  const int H = static_cast<int>(inst.prosumers.size()), T = inst.horizon.T;
  const auto ex = rep.config.admm.execution;
  std::vector<ProsumerCoupling> cps(H, ProsumerCoupling::none(T));
  auto t0 = Clock::now();
  rep.schedules = solve_households(inst, cps, ex);
  rep.prosumer_seconds += seconds_since(t0);
  t0 = Clock::now();
  evaluate_flows(inst, rep.schedules, rep);
  rep.network_seconds += seconds_since(t0);
  rep.converged = true;
  if (rep.scenario == Scenario::A) return;

  // volt-var fixed point: q follows the local voltage with under-relaxation
  const auto buses = inst.feeder.prosumer_buses();
  const double relax = 0.5;
  rep.converged = false;
  for (int it = 1; it <= rep.config.fixed_point_iter; ++it) {
    double change = 0.0;
    for (int h = 0; h < H; ++h) {
      const auto& spec = inst.prosumers[h];
      for (int t = 0; t < T; ++t) {
        const double target = spec.reactive(rep.v[buses[h]][t], inst.feeder.base_voltage);
        change = std::max(change, std::abs(target - cps[h].q_fixed[t]));
        cps[h].q_fixed[t] += relax * (target - cps[h].q_fixed[t]);
      }
    }
    rep.iterations = it;
    if (change < 1e-6) {
      rep.converged = true;
      break;
    }
    t0 = Clock::now();
    rep.schedules = solve_households(inst, cps, ex);
    rep.prosumer_seconds += seconds_since(t0);
    t0 = Clock::now();
    evaluate_flows(inst, rep.schedules, rep);
    rep.network_seconds += seconds_since(t0);
  }
}

void run_coordinated(const Instance& inst, SolveReport& rep) {
  const auto& cfg = rep.config;
  const NetworkModel model(inst.feeder, register_prosumers(inst.feeder, inst.prosumers), inst.horizon);
  const auto buses = inst.feeder.prosumer_buses();
  std::vector<std::unique_ptr<ProsumerAgent>> agents;
  std::vector<ProsumerEndpoint*> endpoints;
  for (std::size_t h = 0; h < inst.prosumers.size(); ++h) {
    agents.push_back(std::make_unique<ProsumerAgent>(inst.prosumers[h], inst.horizon, buses[h],
                                                     inst.feeder.base_voltage));
    endpoints.push_back(agents.back().get());
  }
  AdmmConfig ac = cfg.admm;
  ac.mode = fairness_of(cfg.scenario);
  ac.weights.alpha = ac.mode == FairnessMode::kNone ? 0.0 : cfg.alpha;
  if (cfg.mu_from_mode) {
    const auto d = AdmmConfig::for_mode(ac.mode);
    ac.mu_incr = d.mu_incr;
    ac.mu_decr = d.mu_decr;
  }
  if (cfg.trace) ac.trace_dir = (fs::path(cfg.out_dir) / "trace").string();

  AdmmReport ar;
  try {
    ar = run_admm(model, endpoints, ac);
  } catch (const AdmmError& e) {
    rep.error = e.what();
    if (e.partial()) ar = *e.partial();
  }
  rep.converged = ar.converged && rep.error.empty();
  rep.iterations = ar.iterations;
  rep.history = ar.history;
  rep.parallel_seconds = ar.parallel_seconds;
  for (const auto& l : ar.history) {
    rep.network_seconds += l.network_seconds;
    rep.prosumer_seconds += l.prosumer_seconds;
  }
  rep.network_objective = ar.network_objective;
  rep.v = ar.network.v;
  rep.theta = ar.network.theta;
  rep.p_g = ar.network.p_g;
  rep.q_g = ar.network.q_g;
  for (const auto& a : agents) {
    ProsumerDecision d = a->schedule();
    if (d.p.empty()) {  // never reached: report an idle household
      const int T = inst.horizon.T;
      d.p = d.p_plus = d.p_minus = d.p_bat = d.p_ch = d.p_dis = d.soc = d.y = d.q = std::vector<double>(T, 0.0);
      d.p_pv = a->spec().pv_avail;
    }
    rep.schedules.push_back(std::move(d));
  }
  if (ar.iterations > 0) {
    double worst = 0.0, sum = 0.0;
    long n = 0;
    for (std::size_t h = 0; h < rep.schedules.size(); ++h)
      for (int t = 0; t < inst.horizon.T; ++t)
        for (double g : {ar.network.p_hat[h][t] - ar.copies.p[h][t], ar.network.y_hat[h][t] - ar.copies.y[h][t],
                         ar.network.q_hat[h][t] - ar.copies.q[h][t]}) {
          worst = std::max(worst, std::abs(g));
          sum += std::abs(g);
          ++n;
        }
    rep.max_coupling_gap = worst;
    rep.mean_coupling_gap = n ? sum / n : 0.0;
  }
  rep.admm = std::make_shared<const AdmmReport>(std::move(ar));
}

}  // namespace

SolveReport run_scenario(const ScenarioConfig& cfg) { return run_scenario(cfg, build_instance(cfg)); }

SolveReport run_scenario(const ScenarioConfig& cfg, const Instance& inst) {
  const auto start = Clock::now();
  SolveReport rep;
  rep.config = cfg;
  rep.scenario = cfg.scenario;
  for (const auto& p : inst.prosumers) rep.profiles.push_back({p.demand, p.pv_avail});

  if (is_coordinated(cfg.scenario)) run_coordinated(inst, rep);
  else run_uncoordinated(inst, rep);

  rep.seconds = seconds_since(start);
  if (!is_coordinated(cfg.scenario)) rep.parallel_seconds = rep.seconds;
  if (!rep.v.empty()) {
    rep.metrics = compute_metrics(inputs_for(inst, rep));
    const auto mi = inputs_for(inst, rep);
    rep.violations = voltage_violations(rep.v, mi.v_min, mi.v_max);
  }

  if (cfg.baselines && (cfg.scenario == Scenario::D || fairness_of(cfg.scenario) != FairnessMode::kNone)) {
    for (Scenario base : {Scenario::C, Scenario::D}) {
      ScenarioConfig bc = cfg;
      bc.scenario = base;
      bc.baselines = false;
      bc.trace = false;
      const SolveReport br = run_scenario(bc, build_instance(bc));
      if (!br.converged) continue;  // absent rather than misleading
      const double delta = 100.0 * (rep.metrics.objective - br.metrics.objective) / br.metrics.objective;
      (base == Scenario::C ? rep.metrics.f_pct_c : rep.metrics.f_pct_d) = delta;
    }
  }
  return rep;
}

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json metrics_json(const SolveReport& r) {
  const auto& m = r.metrics;
  Json j;
  j["scenario"] = to_string(r.scenario);
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["error"] = r.error.empty() ? Json(nullptr) : Json(r.error);
  j["seconds"] = r.seconds;
  j["network_seconds"] = r.network_seconds;
  j["prosumer_seconds"] = r.prosumer_seconds;
  j["parallel_seconds"] = r.parallel_seconds;
  j["curtailment_kwh"] = m.curtailment_kwh;
  j["export_kwh"] = m.export_kwh;
  j["cv_mean"] = optional_json(m.cv_mean);
  j["cv_intervals"] = m.cv_intervals;
  j["objective"] = m.objective;
  j["generation_cost"] = m.generation_cost;
  j["prosumer_cost"] = m.prosumer_cost;
  j["f_pct_c"] = optional_json(m.f_pct_c);
  j["f_pct_d"] = optional_json(m.f_pct_d);
  j["transformer_kw"] = m.transformer_kw;
  j["over_voltage_intervals"] = m.over_voltage_intervals;
  j["under_voltage_intervals"] = m.under_voltage_intervals;
  j["v_max"] = m.v_max;
  j["v_min"] = m.v_min;
  j["max_coupling_gap_kw"] = r.max_coupling_gap;
  j["mean_coupling_gap_kw"] = r.mean_coupling_gap;
  Json viol = Json::array();
  for (const auto& v : r.violations) viol.push_back({{"bus", v.bus}, {"t", v.t}, {"v_pu", v.v}});
  j["violations"] = viol;
  return j;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p, const std::string& header) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != header)
    throw FormatError(p.string() + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split(line, ','));
  }
  return rows;
}

const char* kScheduleHeader = "h,t,p,p_plus,p_minus,p_bat,soc,p_pv,y,q";
const char* kVoltageHeader = "bus,t,v_pu,theta";
const char* kTransformerHeader = "t,p_g,q_g";

}  // namespace

void emit_outputs(const SolveReport& r, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  const fs::path d(dir);

  auto res = open_out(d / "residuals.csv");
  write_residual_header(res);
  for (const auto& l : r.history) write_residual_line(res, l);

  auto sch = open_out(d / "schedules.csv");
  sch << kScheduleHeader << "\n";
  for (std::size_t h = 0; h < r.schedules.size(); ++h) {
    const auto& s = r.schedules[h];
    for (std::size_t t = 0; t < s.p.size(); ++t) {
      sch << h + 1 << "," << t;
      for (double v : {s.p[t], s.p_plus[t], s.p_minus[t], s.p_bat[t], s.soc[t], s.p_pv[t], s.y[t], s.q[t]})
        sch << "," << format_exact(v);
      sch << "\n";
    }
  }

  auto vol = open_out(d / "voltages.csv");
  vol << kVoltageHeader << "\n";
  for (std::size_t b = 0; b < r.v.size(); ++b)
    for (std::size_t t = 0; t < r.v[b].size(); ++t)
      vol << b << "," << t << "," << format_exact(r.v[b][t]) << "," << format_exact(r.theta[b][t]) << "\n";

  auto tr = open_out(d / "transformer.csv");
  tr << kTransformerHeader << "\n";
  for (std::size_t t = 0; t < r.p_g.size(); ++t)
    tr << t << "," << format_exact(r.p_g[t]) << "," << format_exact(r.q_g[t]) << "\n";

  auto mj = open_out(d / "metrics.json");
  mj << metrics_json(r).dump(2) << "\n";

  auto cf = open_out(d / "config_resolved.ini");
  write_config(cf, r.config);
  for (auto* f : {&res, &sch, &vol, &tr, &mj, &cf})
    if (!f->good()) throw std::runtime_error("write failed in " + dir);
}

Metrics recompute_metrics(const std::string& dir, double* max_diff) {
  const fs::path d(dir);
  const ScenarioConfig cfg = load_config((d / "config_resolved.ini").string());
  const Instance inst = build_instance(cfg);
  const int H = static_cast<int>(inst.prosumers.size()), T = inst.horizon.T;

  MetricInputs mi;
  mi.horizon = inst.horizon;
  mi.prosumers = inst.prosumers;
  mi.gen_cost = inst.feeder.gen_cost;
  for (const auto& b : inst.feeder.buses) {
    mi.v_min.push_back(b.v_min);
    mi.v_max.push_back(b.v_max);
  }
  mi.schedules.resize(H);
  for (auto& s : mi.schedules)
    for (auto* v : {&s.p, &s.p_plus, &s.p_minus, &s.p_bat, &s.soc, &s.p_pv, &s.y, &s.q}) v->assign(T, 0.0);
  const auto srows = read_csv(d / "schedules.csv", kScheduleHeader);
  if (static_cast<int>(srows.size()) != H * T)
    throw FormatError(dir + "/schedules.csv: expected " + std::to_string(H * T) + " rows");
  for (const auto& row : srows) {
    if (row.size() != 10) throw FormatError(dir + "/schedules.csv: bad row");
    const int h = parse_int(row[0], "schedules h") - 1, t = parse_int(row[1], "schedules t");
    if (h < 0 || h >= H || t < 0 || t >= T) throw FormatError(dir + "/schedules.csv: index out of range");
    auto& s = mi.schedules[h];
    double* dst[] = {&s.p[t], &s.p_plus[t], &s.p_minus[t], &s.p_bat[t], &s.soc[t], &s.p_pv[t], &s.y[t], &s.q[t]};
    for (int k = 0; k < 8; ++k) *dst[k] = parse_double(row[2 + k], "schedules");
  }
  mi.v = zero_block(inst.feeder.num_buses(), T);
  for (const auto& row : read_csv(d / "voltages.csv", kVoltageHeader)) {
    const int b = parse_int(row.at(0), "voltages bus"), t = parse_int(row.at(1), "voltages t");
    mi.v.at(b).at(t) = parse_double(row.at(2), "voltages v");
  }
  for (const auto& row : read_csv(d / "transformer.csv", kTransformerHeader))
    mi.p_g.push_back(parse_double(row.at(1), "transformer p_g"));

  Metrics m = compute_metrics(mi);
  std::ifstream jin(d / "metrics.json");
  if (!jin) throw std::runtime_error("cannot read " + (d / "metrics.json").string());
  const Json j = Json::parse(jin);
  if (!j["f_pct_c"].is_null()) m.f_pct_c = j["f_pct_c"].get<double>();
  if (!j["f_pct_d"].is_null()) m.f_pct_d = j["f_pct_d"].get<double>();
  if (max_diff) {
    double worst = 0.0;
    auto cmp = [&](const char* k, double v) { worst = std::max(worst, std::abs(j.at(k).get<double>() - v)); };
    cmp("curtailment_kwh", m.curtailment_kwh);
    cmp("export_kwh", m.export_kwh);
    cmp("objective", m.objective);
    cmp("generation_cost", m.generation_cost);
    cmp("prosumer_cost", m.prosumer_cost);
    cmp("v_max", m.v_max);
    cmp("v_min", m.v_min);
    cmp("over_voltage_intervals", m.over_voltage_intervals);
    cmp("under_voltage_intervals", m.under_voltage_intervals);
    if (j["cv_mean"].is_null() != !m.cv_mean.has_value()) worst = std::max(worst, 1.0);
    else if (m.cv_mean) cmp("cv_mean", *m.cv_mean);
    const auto tk = j.at("transformer_kw").get<std::vector<double>>();
    if (tk.size() != m.transformer_kw.size()) worst = std::max(worst, 1.0);
    else
      for (std::size_t t = 0; t < tk.size(); ++t) worst = std::max(worst, std::abs(tk[t] - m.transformer_kw[t]));
    *max_diff = worst;
  }
  return m;
}

}  // namespace dopf
