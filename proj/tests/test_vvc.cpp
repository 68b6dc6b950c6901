#include <catch_amalgamated.hpp>

#include "dopf/vvc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

using namespace dopf;
using Catch::Approx;

namespace {

const VvcCurve kCurve{216.0, 225.0, 244.0, 253.0, 0.5};

// Literal five-case transcription: every case whose condition holds is
// evaluated, and the first one found is returned.
double transcription(const VvcCurve& c, double v) {
  struct Case {
    bool when;
    double value;
  };
  const Case cases[] = {
      {v <= c.v1, c.q_max},
      {c.v1 < v && v < c.v2, c.v1 < v && v < c.v2 ? c.q_max * (c.v2 - v) / (c.v2 - c.v1) : 0.0},
      {c.v2 <= v && v <= c.v3, 0.0},
      {c.v3 < v && v < c.v4, c.v3 < v && v < c.v4 ? -c.q_max * (v - c.v3) / (c.v4 - c.v3) : 0.0},
      {v >= c.v4, -c.q_max},
  };
  for (const auto& k : cases)
    if (k.when) return k.value;
  return NAN;
}

// Same curve as two clamped ramps.
double ramps(const VvcCurve& c, double v) {
  const double up = std::clamp((c.v2 - v) / (c.v2 - c.v1), 0.0, 1.0);
  const double down = std::clamp((v - c.v3) / (c.v4 - c.v3), 0.0, 1.0);
  return c.q_max * (up - down);
}

VvcCurve random_curve(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VvcCurve c;
  c.v1 = 200 + 20 * u(rng);
  c.v2 = c.v1 + 0.5 + 15 * u(rng);
  c.v3 = c.v2 + (u(rng) < 0.1 ? 0.0 : 25 * u(rng));
  c.v4 = c.v3 + 0.5 + 15 * u(rng);
  c.q_max = 0.05 + 2 * u(rng);
  return c;
}

}  // namespace

TEST_CASE("worked points on the default curve", "[vvc]") {
  CHECK(evaluate(kCurve, 210.0) == 0.5);
  CHECK(evaluate(kCurve, 230.0) == 0.0);
  CHECK(evaluate(kCurve, 220.5) == Approx(0.25).epsilon(1e-14));
  CHECK(evaluate(kCurve, 248.5) == Approx(-0.25).epsilon(1e-14));
  CHECK(evaluate(kCurve, 260.0) == -0.5);
  // breakpoints take the limiting values
  CHECK(evaluate(kCurve, 216.0) == 0.5);
  CHECK(evaluate(kCurve, 225.0) == 0.0);
  CHECK(evaluate(kCurve, 244.0) == 0.0);
  CHECK(evaluate(kCurve, 253.0) == -0.5);
}

TEST_CASE("matches the transcription oracle on random points", "[vvc][oracle]") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> volts(190.0, 280.0);
  int mismatches = 0;
  double ramp_gap = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const VvcCurve c = (i % 2 == 0) ? kCurve : random_curve(rng);
    double v = volts(rng);
    if (i % 97 == 0) v = std::array<double, 4>{c.v1, c.v2, c.v3, c.v4}[i % 4];  // land exactly on a breakpoint now and then
    if (evaluate(c, v) != transcription(c, v)) ++mismatches;
    ramp_gap = std::max(ramp_gap, std::abs(evaluate(c, v) - ramps(c, v)));
  }
  CHECK(mismatches == 0);
  CHECK(ramp_gap <= 1e-14);
}

TEST_CASE("continuity, monotonicity and range", "[vvc][property]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const VvcCurve c = trial == 0 ? kCurve : random_curve(rng);
    const double lip = c.q_max * std::max(1.0 / (c.v2 - c.v1), 1.0 / (c.v4 - c.v3));
    double lo = INFINITY, hi = -INFINITY;
    double prev = evaluate(c, 150.0);
    int jumps = 0, rises = 0;
    for (double v = 150.0; v <= 320.0; v += 0.013) {
      const double eps = 1e-3;
      const double q = evaluate(c, v);
      if (std::abs(evaluate(c, v + eps) - q) > lip * eps * (1 + 1e-9)) ++jumps;
      if (q > prev) ++rises;
      prev = q;
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    CHECK(jumps == 0);
    CHECK(rises == 0);
    CHECK(lo == -c.q_max);
    CHECK(hi == c.q_max);
  }
}

TEST_CASE("odd symmetry for symmetric segments", "[vvc][property]") {
  const VvcCurve c{210.0, 220.0, 240.0, 250.0, 0.8};
  const double centre = 230.0;
  for (double d = 10.0; d < 40.0; d += 0.37) CHECK(evaluate(c, centre + d) == Approx(-evaluate(c, centre - d)).margin(1e-14));
}

TEST_CASE("curve validation", "[vvc]") {
  CHECK_NOTHROW(kCurve.validate());
  VvcCurve c = kCurve;
  c.v2 = c.v3;
  CHECK_NOTHROW(c.validate());
  c = kCurve;
  c.v1 = c.v2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = kCurve;
  c.q_max = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("block evaluation", "[vvc]") {
  const std::vector<VvcCurve> curves(3, kCurve);
  SECTION("deadband gives zeros") {
    const auto q = evaluate_all(curves, {{1.0, 1.02}, {0.99, 1.0}, {1.05, 1.0}}, 230.0);
    for (const auto& row : q)
      for (double x : row) CHECK(x == 0.0);
  }
  SECTION("low voltage everywhere gives q_max") {
    const auto q = evaluate_all(curves, std::vector<std::vector<double>>(3, std::vector<double>(4, 210.0 / 230.0)), 230.0);
    for (const auto& row : q)
      for (double x : row) CHECK(x == 0.5);
  }
  SECTION("random block equals the scalar loop") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.85, 1.15);
    std::vector<VvcCurve> mixed{kCurve, random_curve(rng), random_curve(rng)};
    std::vector<std::vector<double>> v(3, std::vector<double>(48));
    for (auto& row : v)
      for (double& x : row) x = u(rng);
    const auto q = evaluate_all(mixed, v, 230.0);
    for (int h = 0; h < 3; ++h)
      for (int t = 0; t < 48; ++t) CHECK(q[h][t] == evaluate(mixed[h], v[h][t] * 230.0));
  }
  SECTION("shape errors") {
    CHECK_THROWS_AS(evaluate_all(curves, {{1.0}, {1.0}}, 230.0), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_all(curves, {{1.0}, {1.0, 1.0}, {1.0}}, 230.0), std::invalid_argument);
  }
}
