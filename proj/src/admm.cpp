#include "dopf/admm.hpp"

#include "dopf/sectioned_text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace dopf {

AdmmConfig AdmmConfig::for_mode(FairnessMode mode) {
  AdmmConfig c;
  c.mode = mode;
  if (mode == FairnessMode::kEgalitarian) {
    c.mu_incr = 1.0 / 0.8;
    c.mu_decr = 0.8;
  }
  return c;
}

void AdmmConfig::validate() const {
  if (!(eps_abs > 0 && eps_rel > 0)) throw std::invalid_argument("admm: tolerances must be positive");
  if (!(tau_incr > 0 && tau_decr > 0)) throw std::invalid_argument("admm: tau values must be positive");
  if (!(mu_incr > 0 && mu_decr > 0)) throw std::invalid_argument("admm: mu values must be positive");
  if (!(rho_init > 0)) throw std::invalid_argument("admm: initial penalty must be positive");
  if (max_iter < 1) throw std::invalid_argument("admm: max_iter must be at least 1");
  if (!(weights.gamma > 0) || weights.alpha < 0 || weights.beta < 0) throw std::invalid_argument("admm: need alpha, beta >= 0 and gamma > 0");
}

ProsumerCopies ProsumerCopies::zero(int H, int T) { return {zero_block(H, T), zero_block(H, T), zero_block(H, T)}; }

ProsumerCopies ProsumerCopies::from_replies(const std::vector<ProsumerReply>& replies) {
  ProsumerCopies c;
  for (const auto& r : replies) {
    c.p.push_back(r.p);
    c.y.push_back(r.y);
    c.q.push_back(r.q);
  }
  return c;
}

Multipliers Multipliers::zero(int H, int T) { return {zero_block(H, T), zero_block(H, T), zero_block(H, T)}; }

double norm2(const Block& b) {
  double s = 0.0;
  for (const auto& row : b)
    for (double x : row) s += x * x;
  return std::sqrt(s);
}

double ResidualNorms::r() const { return std::sqrt(r_p * r_p + r_y * r_y + r_q * r_q); }
double ResidualNorms::s() const { return std::sqrt(s_p * s_p + s_y * s_y + s_q * s_q); }

ResidualNorms norms_of(const Residuals& r) {
  return {norm2(r.r_p), norm2(r.r_y), norm2(r.r_q), norm2(r.s_p), norm2(r.s_y), norm2(r.s_q)};
}

namespace {

Block diff(const Block& a, const Block& b, double scale) {
  if (a.size() != b.size()) throw std::invalid_argument("admm: block shapes differ");
  Block out(a.size());
  for (std::size_t h = 0; h < a.size(); ++h) {
    if (a[h].size() != b[h].size()) throw std::invalid_argument("admm: block shapes differ");
    out[h].resize(a[h].size());
    for (std::size_t t = 0; t < a[h].size(); ++t) out[h][t] = scale * (a[h][t] - b[h][t]);
  }
  return out;
}

double norm_of_concat(const Block& a, const Block& b, const Block& c) {
  const double x = norm2(a), y = norm2(b), z = norm2(c);
  return std::sqrt(x * x + y * y + z * z);
}

}  // namespace

Residuals compute_residuals(const NetworkDecision& net, const ProsumerCopies& now, const ProsumerCopies& before,
                            const Penalties& rho) {
  Residuals r;
  r.r_p = diff(net.p_hat, now.p, 1.0);
  r.r_y = diff(net.y_hat, now.y, 1.0);
  r.r_q = diff(net.q_hat, now.q, 1.0);
  r.s_p = diff(now.p, before.p, rho.p);
  r.s_y = diff(now.y, before.y, rho.y);
  r.s_q = diff(now.q, before.q, rho.q);
  return r;
}

Tolerances compute_tolerances(const NetworkDecision& net, const ProsumerCopies& now, const Block& lambda_p,
                              const Block& lambda_y, const Block& lambda_q, const AdmmConfig& cfg) {
  const double H = static_cast<double>(now.p.size());
  const double T = now.p.empty() ? 0.0 : static_cast<double>(now.p.front().size());
  const double base = std::sqrt(3.0 * H * T) * cfg.eps_abs;
  Tolerances tol;
  tol.pri = base + cfg.eps_rel * std::max(norm_of_concat(net.p_hat, net.y_hat, net.q_hat), norm_of_concat(now.p, now.y, now.q));
  tol.dual = base + cfg.eps_rel * norm_of_concat(lambda_p, lambda_y, lambda_q);
  return tol;
}

void dual_update(Multipliers& lambda, const Penalties& rho, const NetworkDecision& net, const ProsumerCopies& now) {
  auto step = [](Block& l, double r, const Block& a, const Block& b) {
    for (std::size_t h = 0; h < l.size(); ++h)
      for (std::size_t t = 0; t < l[h].size(); ++t) l[h][t] += r * (a[h][t] - b[h][t]);
  };
  step(lambda.p, rho.p, net.p_hat, now.p);
  step(lambda.y, rho.y, net.y_hat, now.y);
  step(lambda.q, rho.q, net.q_hat, now.q);
}

namespace {
constexpr double kResidualNoise = 1e-9;
}

Penalties rho_update(const Penalties& rho, const ResidualNorms& n, const AdmmConfig& cfg) {
  auto one = [&](double value, double r, double s) {
    if (std::max(r, s) < kResidualNoise) return value;  // both at rounding level: nothing to balance
    if (r > cfg.mu_incr * s) return value * (1.0 + cfg.tau_incr);
    if (s > cfg.mu_decr * r) return value / (1.0 + cfg.tau_decr);
    return value;
  };
  return {one(rho.p, n.r_p, n.s_p), one(rho.y, n.r_y, n.s_y), one(rho.q, n.r_q, n.s_q)};
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

AdmmReport run_admm(const NetworkModel& model, const std::vector<ProsumerEndpoint*>& prosumers, const AdmmConfig& cfg) {
  cfg.validate();
  const int H = model.num_prosumers(), T = model.horizon.T;
  if (static_cast<int>(prosumers.size()) != H) throw std::invalid_argument("admm: one endpoint per registered prosumer required");
  for (int h = 0; h < H; ++h) {
    const auto reg = prosumers[h]->registration();
    const auto& known = model.prosumers[h];
    if (reg.id != known.id || reg.bus != known.bus) throw std::invalid_argument("admm: endpoint order differs from the registrations");
  }

  const auto start = Clock::now();
  auto report = std::make_shared<AdmmReport>();
  AdmmReport& rep = *report;
  rep.copies = ProsumerCopies::zero(H, T);
  rep.lambda = Multipliers::zero(H, T);
  rep.rho = {cfg.rho_init, cfg.rho_init, cfg.rho_init};

  // initial network state: flat voltages, everything else zero
  NetworkDecision prev_net;
  prev_net.v = zero_block(model.num_buses(), T);
  for (auto& row : prev_net.v) std::fill(row.begin(), row.end(), 1.0);
  prev_net.theta = zero_block(model.num_buses(), T);
  prev_net.p_g = prev_net.q_g = prev_net.p_g_plus = prev_net.p_g_minus = std::vector<double>(T, 0.0);
  prev_net.p_hat = prev_net.y_hat = prev_net.q_hat = zero_block(H, T);
  prev_net.mode = cfg.mode;
  prev_net.aux.assign(T, 0.0);
  rep.network = prev_net;

  NetworkSolveOptions net_opts;
  net_opts.nlp = cfg.nlp;
  net_opts.execution = cfg.execution;
  net_opts.verify = cfg.verify;
  std::vector<nlp::WarmStart> warm;
  if (!cfg.trace_dir.empty()) std::filesystem::create_directories(cfg.trace_dir);

  for (int k = 1; k <= cfg.max_iter; ++k) {
    IterationLog log;
    log.k = k;
    log.rho = rep.rho;

    CouplingSnapshot snap;
    snap.p = rep.copies.p;
    snap.y = rep.copies.y;
    snap.q = rep.copies.q;
    snap.lambda_p = rep.lambda.p;
    snap.lambda_y = rep.lambda.y;
    snap.lambda_q = rep.lambda.q;
    snap.rho = rep.rho;
    snap.q_hat_prev = rep.network.q_hat;
    snap.y_floor_prev = cfg.mode == FairnessMode::kUniformDynamic ? rep.network.aux : std::vector<double>(T, 0.0);

    auto t0 = Clock::now();
    NetworkSolveResult net;
    try {
      net = solve_network(model, snap, cfg.mode, cfg.weights, warm, net_opts);
    } catch (const std::exception& e) {
      rep.seconds = seconds_since(start);
      throw AdmmError("iteration " + std::to_string(k) + ": " + e.what(), report);
    }
    log.network_seconds = seconds_since(t0);
    warm = net.warm;
    if (!cfg.trace_dir.empty()) {
      std::ofstream trace(std::filesystem::path(cfg.trace_dir) / ("network_iter_" + std::to_string(k) + ".csv"));
      write_network_trace(trace, model, net.decision);
    }

    // messages to prosumers: network copies, local voltage, current multipliers
    std::vector<ProsumerInbox> inbox(H);
    for (int h = 0; h < H; ++h) {
      auto& m = inbox[h];
      m.id = model.prosumers[h].id;
      m.p_hat = net.decision.p_hat[h];
      m.y_hat = net.decision.y_hat[h];
      m.v = net.decision.v[model.prosumers[h].bus];
      m.lambda_p = rep.lambda.p[h];
      m.lambda_y = rep.lambda.y[h];
      m.rho_p = rep.rho.p;
      m.rho_y = rep.rho.y;
      rep.payload.to_prosumers += 5LL * T + 2;
    }
    std::vector<ProsumerReply> replies(H);
    std::vector<double> took(H, 0.0);
    std::vector<std::string> errors(H);
    t0 = Clock::now();
    const bool parallel = cfg.execution == Execution::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int h = 0; h < H; ++h) {
      const auto s = Clock::now();
      try {
        replies[h] = prosumers[h]->exchange(inbox[h]);
        if (replies[h].id != inbox[h].id || static_cast<int>(replies[h].p.size()) != T ||
            static_cast<int>(replies[h].y.size()) != T || static_cast<int>(replies[h].q.size()) != T)
          errors[h] = "prosumer " + std::to_string(inbox[h].id) + ": malformed reply";
      } catch (const std::exception& e) {
        errors[h] = e.what();
      }
      took[h] = seconds_since(s);
    }
    log.prosumer_seconds = seconds_since(t0);
    log.slowest_prosumer_seconds = H > 0 ? *std::max_element(took.begin(), took.end()) : 0.0;
    std::string failed;
    for (const auto& e : errors)
      if (!e.empty()) failed += (failed.empty() ? "" : "; ") + e;
    if (!failed.empty()) {
      rep.seconds = seconds_since(start);
      throw AdmmError("iteration " + std::to_string(k) + ": " + failed, report);
    }
    rep.payload.to_aggregator += 3LL * T * H;

    const ProsumerCopies now = ProsumerCopies::from_replies(replies);
    const Residuals res = compute_residuals(net.decision, now, rep.copies, rep.rho);
    log.norms = norms_of(res);
    dual_update(rep.lambda, rep.rho, net.decision, now);
    const Tolerances tol = compute_tolerances(net.decision, now, rep.lambda.p, rep.lambda.y, rep.lambda.q, cfg);
    log.eps_pri = tol.pri;
    log.eps_dual = tol.dual;

    rep.previous = std::move(rep.copies);
    rep.copies = now;
    rep.network = net.decision;
    rep.network_objective = net.objective;
    rep.iterations = k;
    rep.parallel_seconds += log.network_seconds + log.slowest_prosumer_seconds;
    rep.history.push_back(log);

    if (log.norms.r() <= tol.pri && log.norms.s() <= tol.dual) {
      rep.converged = true;
      break;
    }
    rep.rho = rho_update(rep.rho, log.norms, cfg);
  }
  rep.seconds = seconds_since(start);
  return rep;
}

void write_residual_header(std::ostream& out) {
  out << "k,r_p,r_y,r_q,s_p,s_y,s_q,rho_p,rho_y,rho_q,eps_pri,eps_dual\n";
}

void write_residual_line(std::ostream& out, const IterationLog& l) {
  const auto& n = l.norms;
  out << l.k;
  for (double v : {n.r_p, n.r_y, n.r_q, n.s_p, n.s_y, n.s_q, l.rho.p, l.rho.y, l.rho.q, l.eps_pri, l.eps_dual})
    out << "," << format_exact(v);
  out << "\n";
}

}  // namespace dopf
