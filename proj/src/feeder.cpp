#include "dopf/feeder.hpp"

#include "dopf/sectioned_text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace dopf {

int FeederSpec::num_prosumers() const {
  int n = 0;
  for (const auto& bus : buses)
    if (bus.prosumer) ++n;
  return n;
}

std::vector<int> FeederSpec::prosumer_buses() const {
  std::vector<int> out(num_prosumers(), -1);
  for (const auto& bus : buses)
    if (bus.prosumer) {
      const int h = *bus.prosumer;
      if (h < 1 || h > static_cast<int>(out.size())) throw FeederError("prosumer id out of range");
      out[h - 1] = bus.id;
    }
  return out;
}

namespace {

std::string bus_label(int i) { return "bus " + std::to_string(i); }

// Breadth-first order from the slack bus; throws if the graph is not a tree.
std::vector<int> tree_order(int n, const std::vector<Branch>& branches) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : branches) {
    adj[br.from_bus].push_back(br.to_bus);
    adj[br.to_bus].push_back(br.from_bus);
  }
  std::vector<int> parent(n, -2);
  std::vector<int> order;
  order.reserve(n);
  parent[0] = -1;
  order.push_back(0);
  for (std::size_t head = 0; head < order.size(); ++head) {
    const int u = order[head];
    for (int w : adj[u]) {
      if (w == parent[u]) continue;
      if (parent[w] != -2) throw FeederError("branch set contains a cycle through " + bus_label(w));
      parent[w] = u;
      order.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    for (int i = 0; i < n; ++i)
      if (parent[i] == -2) throw FeederError(bus_label(i) + " is not connected to the slack bus");
  }
  return order;
}

std::vector<int> tree_parents(const FeederSpec& spec) {
  const int n = spec.num_buses();
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : spec.branches) {
    adj[br.from_bus].push_back(br.to_bus);
    adj[br.to_bus].push_back(br.from_bus);
  }
  const auto order = tree_order(n, spec.branches);
  std::vector<int> parent(n, -1);
  std::vector<char> seen(n, 0);
  seen[0] = 1;
  for (int u : order)
    for (int w : adj[u])
      if (!seen[w]) {
        seen[w] = 1;
        parent[w] = u;
      }
  return parent;
}

}  // namespace

void validate(const FeederSpec& spec) {
  const int n = spec.num_buses();
  if (n < 2) throw FeederError("feeder needs at least two buses");
  if (!(spec.base_voltage > 0) || !(spec.base_power > 0)) throw FeederError("base voltage and base power must be positive");
  int slack = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& bus = spec.buses[i];
    if (bus.id != i) throw FeederError("bus ids must be 0..n-1 in order; found id " + std::to_string(bus.id) + " at position " + std::to_string(i));
    if (bus.is_slack) {
      ++slack;
      if (i != 0) throw FeederError("slack bus must be bus 0");
    }
    if (!(bus.v_min > 0) || !(bus.v_min < bus.v_max)) throw FeederError(bus_label(i) + ": need 0 < v_min < v_max");
  }
  if (slack != 1) throw FeederError("exactly one slack bus required, found " + std::to_string(slack));
  if (spec.buses[0].prosumer) throw FeederError("slack bus cannot host a prosumer");

  if (static_cast<int>(spec.branches.size()) != n - 1)
    throw FeederError("radial feeder needs " + std::to_string(n - 1) + " branches, found " + std::to_string(spec.branches.size()));
  for (std::size_t k = 0; k < spec.branches.size(); ++k) {
    const Branch& br = spec.branches[k];
    const std::string where = "branch " + std::to_string(k);
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n) throw FeederError(where + ": bus index out of range");
    if (br.from_bus == br.to_bus) throw FeederError(where + ": self loop");
    if (!std::isfinite(br.g) || !std::isfinite(br.b)) throw FeederError(where + ": non-finite admittance");
    if (br.g < 0) throw FeederError(where + ": negative conductance");
  }
  tree_order(n, spec.branches);

  const int h_count = spec.num_prosumers();
  std::vector<int> hits(h_count + 1, 0);
  for (const auto& bus : spec.buses) {
    if (!bus.prosumer) continue;
    const int h = *bus.prosumer;
    if (h < 1 || h > h_count) throw FeederError(bus_label(bus.id) + ": prosumer id " + std::to_string(h) + " outside 1.." + std::to_string(h_count));
    if (++hits[h] > 1) throw FeederError("prosumer " + std::to_string(h) + " attached to more than one bus");
  }

  const auto& gl = spec.gen_limits;
  if (gl.p_min > gl.p_max || gl.q_min > gl.q_max) throw FeederError("generator limits inverted");
  if (spec.gen_cost.c2 < 0) throw FeederError("quadratic generation cost must be nonnegative");
}

namespace {

FeederSpec skeleton(int n_buses, VoltageLimits limits) {
  FeederSpec spec;
  spec.buses.resize(n_buses);
  for (int i = 0; i < n_buses; ++i) {
    spec.buses[i].id = i;
    spec.buses[i].is_slack = (i == 0);
    if (i > 0) spec.buses[i].prosumer = i;
    spec.buses[i].v_min = limits.v_min;
    spec.buses[i].v_max = limits.v_max;
  }
  return spec;
}

}  // namespace

FeederSpec build_line_topology(int n_prosumers, Admittance per_hop, VoltageLimits limits) {
  if (n_prosumers < 1) throw FeederError("line topology needs at least one prosumer");
  if (!std::isfinite(per_hop.g) || !std::isfinite(per_hop.b)) throw FeederError("hop admittance must be finite");
  SpurConfig chain;
  for (int i = 0; i < n_prosumers; ++i) chain.parent.push_back(i);
  return build_tree_topology(n_prosumers, chain, per_hop, limits);
}

SpurConfig spurs_to_config(const std::vector<Spur>& spurs) {
  SpurConfig cfg;
  for (const auto& spur : spurs) {
    if (spur.length < 1) throw FeederError("spur length must be positive");
    int up = spur.attach;
    for (int k = 0; k < spur.length; ++k) {
      cfg.parent.push_back(up);
      up = static_cast<int>(cfg.parent.size());
    }
  }
  return cfg;
}

SpurConfig default_spur_layout(int n_prosumers, std::uint64_t seed) {
  if (n_prosumers < 1) throw FeederError("tree topology needs at least one prosumer");
  if (n_prosumers < 4) return spurs_to_config({{0, n_prosumers}});
  std::mt19937_64 rng(seed);
  int spurs = 3 + static_cast<int>(rng() % 3);
  spurs = std::min(spurs, n_prosumers - 1);
  const int trunk = std::max(1, n_prosumers / (spurs + 1));
  const int rest = n_prosumers - trunk;
  spurs = std::min(spurs, rest);
  std::vector<int> attach(spurs);
  for (int j = 0; j < spurs; ++j) {
    // evenly spaced along the trunk, jittered by up to one bus
    const int base = 1 + (j * trunk) / spurs;
    const int jitter = static_cast<int>(rng() % 3) - 1;
    attach[j] = std::clamp(base + jitter, 1, trunk);
  }
  std::sort(attach.begin(), attach.end());
  std::vector<Spur> layout{{0, trunk}};
  for (int j = 0; j < spurs; ++j) {
    const int len = rest / spurs + (j < rest % spurs ? 1 : 0);
    layout.push_back({attach[j], len});
  }
  return spurs_to_config(layout);
}

FeederSpec build_tree_topology(int n_prosumers, const SpurConfig& spurs, Admittance per_hop, VoltageLimits limits) {
  if (n_prosumers < 1) throw FeederError("tree topology needs at least one prosumer");
  if (static_cast<int>(spurs.parent.size()) != n_prosumers)
    throw FeederError("spur layout describes " + std::to_string(spurs.parent.size()) + " buses, expected " + std::to_string(n_prosumers));
  if (!std::isfinite(per_hop.g) || !std::isfinite(per_hop.b)) throw FeederError("hop admittance must be finite");
  FeederSpec spec = skeleton(n_prosumers + 1, limits);
  for (int k = 0; k < n_prosumers; ++k) {
    const int child = k + 1;
    const int up = spurs.parent[k];
    if (up < 0 || up > n_prosumers) throw FeederError(bus_label(child) + " has parent " + std::to_string(up) + " outside the feeder");
    if (up == child) throw FeederError(bus_label(child) + " is its own parent");
    spec.branches.push_back({up, child, per_hop.g, per_hop.b});
  }
  validate(spec);
  return spec;
}

Admittance impedance_to_admittance(Impedance z) {
  const double d = z.r * z.r + z.x * z.x;
  if (d == 0.0) return {0.0, 0.0};
  return {z.r / d, -z.x / d};
}

Impedance admittance_to_impedance(Admittance y) {
  const double d = y.g * y.g + y.b * y.b;
  if (d == 0.0) return {0.0, 0.0};
  return {y.g / d, -y.b / d};
}

FeederSpec to_per_unit(const FeederSpec& spec, const std::vector<Impedance>& ohms) {
  if (!(spec.base_voltage > 0) || !(spec.base_power > 0)) throw FeederError("per-unit conversion needs positive bases");
  if (ohms.size() != spec.branches.size()) throw FeederError("one impedance per branch required");
  FeederSpec out = spec;
  const double zb = spec.base_impedance();
  for (std::size_t k = 0; k < ohms.size(); ++k) {
    const Admittance y = impedance_to_admittance({ohms[k].r / zb, ohms[k].x / zb});
    out.branches[k].g = y.g;
    out.branches[k].b = y.b;
  }
  return out;
}

std::vector<Impedance> from_per_unit(const FeederSpec& spec) {
  if (!(spec.base_voltage > 0) || !(spec.base_power > 0)) throw FeederError("per-unit conversion needs positive bases");
  const double zb = spec.base_impedance();
  std::vector<Impedance> out;
  for (const auto& br : spec.branches) {
    const Impedance z = admittance_to_impedance({br.g, br.b});
    out.push_back({z.r * zb, z.x * zb});
  }
  return out;
}

std::vector<int> downstream_prosumers(const FeederSpec& spec) {
  const auto parent = tree_parents(spec);
  const auto order = tree_order(spec.num_buses(), spec.branches);
  std::vector<int> count(spec.num_buses(), 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int u = *it;
    if (spec.buses[u].prosumer) count[u] += 1;
    if (parent[u] >= 0) count[parent[u]] += count[u];
  }
  return count;
}

Impedance scaled_hop_impedance(const FeederSpec& spec, Impedance hop, double loading) {
  if (!(loading > 0)) throw FeederError("path loading must be positive");
  if (!(hop.r > 0)) throw FeederError("hop resistance must be positive for scaling");
  const auto parent = tree_parents(spec);
  const auto count = downstream_prosumers(spec);
  // accumulated downstream count along each path; the worst one sets the scale
  std::vector<double> acc(spec.num_buses(), 0.0);
  double worst = 0.0;
  for (int u : tree_order(spec.num_buses(), spec.branches)) {
    if (parent[u] < 0) continue;
    acc[u] = acc[parent[u]] + count[u];
    worst = std::max(worst, acc[u]);
  }
  if (worst == 0.0) return hop;
  const double r_pu = loading / worst;
  const double r = r_pu * spec.base_impedance();
  return {r, hop.x * r / hop.r};
}

BusAdmittance build_admittance(const FeederSpec& spec) {
  BusAdmittance y;
  const int n = spec.num_buses();
  y.rows.resize(n);
  for (int i = 0; i < n; ++i) y.rows[i].push_back({i, 0.0, 0.0});
  for (const auto& br : spec.branches) {
    const int a = br.from_bus, c = br.to_bus;
    y.rows[a][0].g += br.g;
    y.rows[a][0].b += br.b;
    y.rows[c][0].g += br.g;
    y.rows[c][0].b += br.b;
    y.rows[a].push_back({c, -br.g, -br.b});
    y.rows[c].push_back({a, -br.g, -br.b});
  }
  return y;
}

FeederSpec read_feeder(std::istream& in, const std::string& origin) {
  const SectionedText doc = SectionedText::parse(in, origin);
  FeederSpec spec;
  for (const char* section : {"bases", "buses", "branches"})
    if (!doc.has(section)) throw FormatError(origin + ": missing [" + std::string(section) + "] section");

  for (const auto& [key, value] : doc.pairs("bases")) {
    const std::string ctx = origin + " [bases] " + key;
    if (key == "voltage") spec.base_voltage = parse_double(value, ctx);
    else if (key == "power") spec.base_power = parse_double(value, ctx);
    else throw FormatError(ctx + ": unknown key");
  }
  if (doc.has("limits")) {
    for (const auto& [key, value] : doc.pairs("limits")) {
      const std::string ctx = origin + " [limits] " + key;
      const double v = parse_double(value, ctx);
      if (key == "gen_p_min") spec.gen_limits.p_min = v;
      else if (key == "gen_p_max") spec.gen_limits.p_max = v;
      else if (key == "gen_q_min") spec.gen_limits.q_min = v;
      else if (key == "gen_q_max") spec.gen_limits.q_max = v;
      else if (key == "c0") spec.gen_cost.c0 = v;
      else if (key == "c1") spec.gen_cost.c1 = v;
      else if (key == "c2") spec.gen_cost.c2 = v;
      else throw FormatError(ctx + ": unknown key");
    }
  }
  // id, slack, prosumer (- for none), v_min, v_max
  for (const auto& line : doc.lines("buses")) {
    const auto cols = split(line.text, ',');
    const std::string ctx = origin + ":" + std::to_string(line.number);
    if (cols.size() != 5) throw FormatError(ctx + ": bus rows need 5 columns");
    Bus bus;
    bus.id = parse_int(cols[0], ctx);
    bus.is_slack = parse_bool(cols[1], ctx);
    if (cols[2] != "-") bus.prosumer = parse_int(cols[2], ctx);
    bus.v_min = parse_double(cols[3], ctx);
    bus.v_max = parse_double(cols[4], ctx);
    spec.buses.push_back(bus);
  }
  // from, to, g, b
  for (const auto& line : doc.lines("branches")) {
    const auto cols = split(line.text, ',');
    const std::string ctx = origin + ":" + std::to_string(line.number);
    if (cols.size() != 4) throw FormatError(ctx + ": branch rows need 4 columns");
    spec.branches.push_back({parse_int(cols[0], ctx), parse_int(cols[1], ctx), parse_double(cols[2], ctx), parse_double(cols[3], ctx)});
  }
  validate(spec);
  return spec;
}

FeederSpec load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open feeder file '" + path + "'");
  return read_feeder(in, path);
}

void write_feeder(std::ostream& out, const FeederSpec& spec) {
  out << "[bases]\nvoltage = " << format_exact(spec.base_voltage) << "\npower = " << format_exact(spec.base_power) << "\n\n";
  out << "[limits]\n";
  out << "gen_p_min = " << format_exact(spec.gen_limits.p_min) << "\n";
  out << "gen_p_max = " << format_exact(spec.gen_limits.p_max) << "\n";
  out << "gen_q_min = " << format_exact(spec.gen_limits.q_min) << "\n";
  out << "gen_q_max = " << format_exact(spec.gen_limits.q_max) << "\n";
  out << "c0 = " << format_exact(spec.gen_cost.c0) << "\n";
  out << "c1 = " << format_exact(spec.gen_cost.c1) << "\n";
  out << "c2 = " << format_exact(spec.gen_cost.c2) << "\n\n";
  out << "[buses]\n# id, slack, prosumer, v_min, v_max\n";
  for (const auto& bus : spec.buses)
    out << bus.id << ", " << (bus.is_slack ? 1 : 0) << ", " << (bus.prosumer ? std::to_string(*bus.prosumer) : "-") << ", "
        << format_exact(bus.v_min) << ", " << format_exact(bus.v_max) << "\n";
  out << "\n[branches]\n# from, to, g, b\n";
  for (const auto& br : spec.branches)
    out << br.from_bus << ", " << br.to_bus << ", " << format_exact(br.g) << ", " << format_exact(br.b) << "\n";
}

void save_feeder(const std::string& path, const FeederSpec& spec) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write feeder file '" + path + "'");
  write_feeder(out, spec);
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace dopf
