#include "doctest.h"
#include "test_support.hpp"

#include "opflab/acpf.hpp"
#include "opflab/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

using namespace opflab;
using opflab::testing::Gen;

namespace {

// Apparent power leaving bus i: S = V_i conj((V_i - V_j) y).
std::complex<double> complex_flow(double vi, double vj, double ti, double tj, double g, double b) {
  const std::complex<double> Vi = std::polar(vi, ti);
  const std::complex<double> Vj = std::polar(vj, tj);
  return Vi * std::conj((Vi - Vj) * std::complex<double>(g, b));
}

NetworkCase two_bus() { return parse_matpower(opflab::testing::two_bus_text(0.02, 0.2, 80.0)); }

GridState random_state(const NetworkCase& net, Gen& gen, double spread) {
  GridState s = flat_state(net);
  for (auto& v : s.v) v = gen.uniform(1.0 - spread, 1.0 + spread);
  for (auto& t : s.theta) t = gen.uniform(-spread * 4, spread * 4);
  for (auto& p : s.p_g) p = gen.uniform(-spread * 20, spread * 20);
  for (auto& q : s.q_g) q = gen.uniform(-spread * 20, spread * 20);
  return s;
}

}  // namespace

TEST_CASE("line flow matches the complex-power oracle") {
  Gen gen(101);
  double worst = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double vi = gen.uniform(0.8, 1.2), vj = gen.uniform(0.8, 1.2);
    const double ti = gen.uniform(-1.0, 1.0), tj = gen.uniform(-1.0, 1.0);
    const double g = gen.uniform(0.0, 10.0), b = gen.uniform(-40.0, 0.0);
    const LineFlow f = line_flow(vi, vj, ti, tj, g, b);
    const auto S = complex_flow(vi, vj, ti, tj, g, b);
    worst = std::max({worst, std::abs(f.p - S.real()), std::abs(f.q - S.imag())});
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("line flow special points") {
  const LineFlow flat = line_flow(1.0, 1.0, 0.3, 0.3, 2.0, -7.0);
  CHECK(std::abs(flat.p) <= 1e-15);
  CHECK(std::abs(flat.q) <= 1e-15);

  const LineFlow f = line_flow(1.0, 0.95, 0.1, 0.0, 1.0, -5.0);
  const auto S = complex_flow(1.0, 0.95, 0.1, 0.0, 1.0, -5.0);
  CHECK(f.p == doctest::Approx(S.real()).epsilon(1e-14));
  CHECK(f.q == doctest::Approx(S.imag()).epsilon(1e-14));

  const double eps = 1e-6;
  const LineFlow small = line_flow(1.0, 1.0, eps, 0.0, 1.5, -8.0);
  CHECK(std::abs(small.p - 8.0 * eps) <= 10.0 * eps * eps);
}

TEST_CASE("dc flow") {
  CHECK(dc_flow(0.2, 0.2, -5.0) == 0.0);
  CHECK(dc_flow(0.1, 0.0, -5.0) == doctest::Approx(0.5));

  // Taylor remainder of the AC flow around zero angle difference at v = 1.
  const double g = 1.2, b = -6.0;
  double worst_ratio = 0.0;
  for (int k = -50; k <= 50; ++k) {
    const double d = 0.001 * k;
    if (k == 0) continue;
    const double err = std::abs(dc_flow(d, 0.0, b) - line_flow(1.0, 1.0, d, 0.0, g, b).p);
    worst_ratio = std::max(worst_ratio, err / (d * d));
  }
  // remainder coefficient is g/2 to leading order
  CHECK(worst_ratio <= g);
}

TEST_CASE("line flow derivatives match finite differences") {
  Gen gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<double, 4> x = {gen.uniform(0.9, 1.1), gen.uniform(0.9, 1.1), gen.uniform(-0.5, 0.5),
                               gen.uniform(-0.5, 0.5)};
    const double g = gen.uniform(0.0, 5.0), b = gen.uniform(-20.0, 0.0);
    const LineFlowJet jet = line_flow_jet(x[0], x[1], x[2], x[3], g, b);
    const LineFlow base = line_flow(x[0], x[1], x[2], x[3], g, b);
    CHECK(jet.value.p == doctest::Approx(base.p).epsilon(1e-14));
    CHECK(jet.value.q == doctest::Approx(base.q).epsilon(1e-14));
    const double h = 1e-6;
    for (int a = 0; a < 4; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const LineFlowJet jp = line_flow_jet(xp[0], xp[1], xp[2], xp[3], g, b);
      const LineFlowJet jm = line_flow_jet(xm[0], xm[1], xm[2], xm[3], g, b);
      CHECK(jet.dp[a] == doctest::Approx((jp.value.p - jm.value.p) / (2 * h)).epsilon(1e-6));
      CHECK(jet.dq[a] == doctest::Approx((jp.value.q - jm.value.q) / (2 * h)).epsilon(1e-6));
      for (int c = 0; c < 4; ++c) {
        CHECK(jet.hp[a][c] == doctest::Approx((jp.dp[c] - jm.dp[c]) / (2 * h)).epsilon(1e-5).scale(1.0));
        CHECK(jet.hq[a][c] == doctest::Approx((jp.dq[c] - jm.dq[c]) / (2 * h)).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("all_flows covers both orientations") {
  const NetworkCase net = two_bus();
  GridState s = flat_state(net);
  FlowSet flat = all_flows(s, net);
  REQUIRE(flat.p_f.size() == 2);
  CHECK(flat.p_f[0] == 0.0);
  CHECK(flat.q_f[1] == 0.0);

  s.v = {1.02, 0.97};
  s.theta = {0.0, -0.08};
  const FlowSet f = all_flows(s, net);
  const auto& br = net.branches[0];
  const auto S01 = complex_flow(1.02, 0.97, 0.0, -0.08, br.g, br.b);
  const auto S10 = complex_flow(0.97, 1.02, -0.08, 0.0, br.g, br.b);
  CHECK(f.p_f[0] == doctest::Approx(S01.real()).epsilon(1e-13));
  CHECK(f.q_f[0] == doctest::Approx(S01.imag()).epsilon(1e-13));
  CHECK(f.p_f[1] == doctest::Approx(S10.real()).epsilon(1e-13));
  CHECK(f.q_f[1] == doctest::Approx(S10.imag()).epsilon(1e-13));
  CHECK(f.p_f[0] != doctest::Approx(-f.p_f[1]));  // losses

  const NetworkCase c14 = load_matpower(opflab::testing::data_path("case14.m"));
  CHECK(all_flows(flat_state(c14), c14).p_f.size() == 40);

  s.v.pop_back();
  CHECK_THROWS_AS(all_flows(s, net), Error);
}

TEST_CASE("kcl residual") {
  const NetworkCase net = two_bus();
  GridState s = flat_state(net);
  s.p_g = {0.0};
  s.q_g = {0.0};
  s.p_d = {0.1, 0.0};
  s.q_d = {0.0, 0.0};
  const KclResidual r = kcl_residual(s, all_flows(s, net), net);
  CHECK(r.p[0] == doctest::Approx(0.1));
  CHECK(r.p[1] == 0.0);
  CHECK(r.q[0] == 0.0);

  // An isolated bus with no load and no generation balances trivially.
  std::string text = opflab::testing::two_bus_text(0.02, 0.2);
  text.replace(text.find("];\nmpc.gen"), 3, "  3 1 0 0 0 0 1 1 0 135 1 1.1 0.9;\n];\n");
  const NetworkCase three = parse_matpower(text);
  GridState t = flat_state(three);
  t.v = {1.0, 0.98, 1.03};
  t.theta = {0.0, -0.05, 0.4};
  CHECK(kcl_residual(t, all_flows(t, three), three).p[2] == 0.0);

  // Generators at the same bus aggregate.
  const NetworkCase c5 = load_matpower(opflab::testing::data_path("case5.m"));
  GridState u = flat_state(c5);
  const KclResidual ru = kcl_residual(u, all_flows(u, c5), c5);
  double at_bus0 = 0.0;
  for (std::size_t k = 0; k < c5.generators.size(); ++k)
    if (c5.generators[k].bus == 0) at_bus0 += u.p_g[k];
  CHECK(ru.p[0] == doctest::Approx(u.p_d[0] - at_bus0));
}

TEST_CASE("satisfiability degrees") {
  const NetworkCase net = two_bus();
  GridState s = flat_state(net);
  const FlowSet f = all_flows(s, net);

  s.v[1] = net.buses[1].v_max;
  auto sig = satisfiability_degrees(s, f, &f, net);
  CHECK(sig.v_hi[1] == 0.0);

  s.v[1] = net.buses[1].v_max + 0.05;
  sig = satisfiability_degrees(s, f, &f, net);
  CHECK(sig.v_hi[1] == doctest::Approx(0.05));
  CHECK(sig.v_lo[1] < 0.0);

  FlowSet g = f;
  g.p_f[0] = 0.3;
  g.q_f[0] = 0.4;
  NetworkCase limited = net;
  limited.branches[0].s_max = 0.25;
  sig = satisfiability_degrees(s, g, &g, limited);
  CHECK(sig.flow_limit[0] == doctest::Approx(0.0).epsilon(1e-15));
  ConstraintOptions sq;
  sq.squared_limit = true;
  sig = satisfiability_degrees(s, g, &g, limited, sq);
  CHECK(sig.flow_limit[0] == doctest::Approx(0.25 - 0.0625));

  CHECK_THROWS_AS(satisfiability_degrees(s, f, nullptr, net), Error);
  try {
    satisfiability_degrees(s, f, nullptr, net);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingTruthFlows);
  }
  sig = satisfiability_degrees(s, f, nullptr, net, {}, false);
  CHECK(sig.ohm_p.empty());
}

TEST_CASE("single over-limit bus on case14") {
  const NetworkCase net = load_matpower(opflab::testing::data_path("case14.m"));
  GridState s = flat_state(net);
  // Balanced, flat: loads zero, dispatch zero.
  std::fill(s.p_d.begin(), s.p_d.end(), 0.0);
  std::fill(s.q_d.begin(), s.q_d.end(), 0.0);
  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    s.p_g[k] = std::clamp(0.0, net.generators[k].p_min, net.generators[k].p_max);
    s.q_g[k] = std::clamp(0.0, net.generators[k].q_min, net.generators[k].q_max);
  }
  FlowSet f = all_flows(s, net);
  const ViolationVector clean = violation_degrees(s, f, &f, net);
  CHECK(clean.feasible(1e-8));

  s.v[3] = net.buses[3].v_max + 0.05;
  const ViolationVector nu = violation_degrees(s, f, &f, net);
  CHECK(nu[Family::VoltageBounds] == doctest::Approx(0.05 / 14.0));
  CHECK(nu[Family::VoltageBounds] == doctest::Approx(0.003571).epsilon(1e-4));
}

namespace {

// Direct re-computation of every violation degree from the constraint
// definitions, bypassing the sigma vectors.
ViolationVector reference_violations(const GridState& s, const FlowSet& pred, const FlowSet& truth,
                                     const NetworkCase& net, bool squared, bool exact6) {
  ViolationVector out;
  const double n = static_cast<double>(net.num_buses());
  const double e = static_cast<double>(net.num_lines());
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    out[Family::VoltageBounds] += std::max(0.0, net.buses[i].v_min - s.v[i]) / n;
    out[Family::VoltageBounds] += std::max(0.0, s.v[i] - net.buses[i].v_max) / n;
  }
  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    const Generator& g = net.generators[k];
    out[Family::ActiveGeneration] += (std::max(0.0, g.p_min - s.p_g[k]) + std::max(0.0, s.p_g[k] - g.p_max)) / n;
    out[Family::ReactiveGeneration] += (std::max(0.0, g.q_min - s.q_g[k]) + std::max(0.0, s.q_g[k] - g.q_max)) / n;
  }
  std::vector<double> bal_p(net.num_buses()), bal_q(net.num_buses());
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    bal_p[i] = s.p_d[i];
    bal_q[i] = s.q_d[i];
  }
  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    bal_p[net.generators[k].bus] -= s.p_g[k];
    bal_q[net.generators[k].bus] -= s.q_g[k];
  }
  for (std::size_t m = 0; m < net.branches.size(); ++m) {
    const Branch& br = net.branches[m];
    const std::size_t ends[2][2] = {{br.from, br.to}, {br.to, br.from}};
    for (int dir = 0; dir < 2; ++dir) {
      const std::size_t i = ends[dir][0], j = ends[dir][1], k = 2 * m + dir;
      const double d = s.theta[i] - s.theta[j];
      out[Family::AngleDifference] += (std::max(0.0, d - br.theta_delta) + std::max(0.0, -d - br.theta_delta)) / e;
      const double lim = squared ? br.s_max * br.s_max : br.s_max;
      out[Family::FlowLimit] += std::max(0.0, pred.p_f[k] * pred.p_f[k] + pred.q_f[k] * pred.q_f[k] - lim) / e;
      out[Family::OhmActive] += std::abs(pred.p_f[k] - truth.p_f[k]) / e;
      out[Family::OhmReactive] += std::abs(pred.q_f[k] - truth.q_f[k]) / e;
      bal_p[i] += pred.p_f[k];
      bal_q[i] += pred.q_f[k];
    }
  }
  if (exact6) {
    for (std::size_t m = 0; m < net.branches.size(); ++m) {
      for (std::size_t i : {net.branches[m].from, net.branches[m].to}) {
        out[Family::KclActive] += std::abs(bal_p[i]) / e;
        out[Family::KclReactive] += std::abs(bal_q[i]) / e;
      }
    }
  } else {
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
      out[Family::KclActive] += std::abs(bal_p[i]) / n;
      out[Family::KclReactive] += std::abs(bal_q[i]) / n;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("violation degrees match the direct re-computation") {
  Gen gen(202);
  for (const char* name : {"case5.m", "case14.m"}) {
    NetworkCase net = load_matpower(opflab::testing::data_path(name));
    for (auto& br : net.branches)
      if (std::isinf(br.s_max)) br.s_max = 0.3;
    for (int trial = 0; trial < 100; ++trial) {
      const GridState s = random_state(net, gen, 0.15);
      const FlowSet f = all_flows(s, net);
      const FlowSet truth = all_flows(random_state(net, gen, 0.15), net);
      for (bool squared : {false, true}) {
        for (bool exact6 : {false, true}) {
          ConstraintOptions opt;
          opt.squared_limit = squared;
          opt.paper_exact_nu6 = exact6;
          const ViolationVector got = violation_degrees(s, f, &truth, net, opt);
          const ViolationVector want = reference_violations(s, f, truth, net, squared, exact6);
          for (Family fam : kAllFamilies) {
            CAPTURE(family_tag(fam));
            CHECK(got[fam] == doctest::Approx(want[fam]).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("violation degree properties") {
  Gen gen(303);
  NetworkCase net = load_matpower(opflab::testing::data_path("case14.m"));
  for (auto& br : net.branches) br.s_max = 0.5;
  for (int trial = 0; trial < 200; ++trial) {
    const GridState s = random_state(net, gen, gen.uniform(0.0, 0.2));
    const FlowSet f = all_flows(s, net);
    const FlowSet truth = all_flows(random_state(net, gen, 0.1), net);
    const SatisfiabilityDegrees sig = satisfiability_degrees(s, f, &truth, net);
    const ViolationVector nu = violation_degrees(sig, net);
    for (double v : nu.nu) CHECK(v >= 0.0);

    // zero iff satisfied
    const bool ineq_ok = std::all_of(sig.v_hi.begin(), sig.v_hi.end(), [](double x) { return x <= 0; }) &&
                         std::all_of(sig.v_lo.begin(), sig.v_lo.end(), [](double x) { return x <= 0; });
    CHECK((nu[Family::VoltageBounds] == 0.0) == ineq_ok);

    // positive homogeneity in sigma
    const double t = gen.uniform(0.1, 5.0);
    SatisfiabilityDegrees scaled = sig;
    for (auto* vec : {&scaled.v_lo, &scaled.v_hi, &scaled.angle_lo, &scaled.angle_hi, &scaled.p_lo,
                      &scaled.p_hi, &scaled.q_lo, &scaled.q_hi, &scaled.flow_limit, &scaled.ohm_p,
                      &scaled.ohm_q, &scaled.kcl_p, &scaled.kcl_q})
      for (double& x : *vec) x *= t;
    const ViolationVector nus = violation_degrees(scaled, net);
    for (Family fam : kAllFamilies) CHECK(nus[fam] == doctest::Approx(t * nu[fam]).epsilon(1e-12));
  }
}

TEST_CASE("linear families shift exactly with their slack") {
  const NetworkCase net = two_bus();
  GridState s = flat_state(net);
  s.v[1] = 1.2;
  s.theta[1] = -0.7;
  s.p_g[0] = 3.0;
  s.q_g[0] = -2.0;
  const FlowSet f = all_flows(s, net);
  const auto a = satisfiability_degrees(s, f, &f, net);
  NetworkCase loose = net;
  const double delta = 0.01;
  loose.buses[1].v_max += delta;
  loose.branches[0].theta_delta += delta;
  loose.generators[0].p_max += delta;
  loose.generators[0].q_min -= delta;
  const auto b = satisfiability_degrees(s, f, &f, loose);
  CHECK(a.v_hi[1] - b.v_hi[1] == doctest::Approx(delta).epsilon(1e-12));
  CHECK(a.angle_hi[1] - b.angle_hi[1] == doctest::Approx(delta).epsilon(1e-12));
  CHECK(a.p_hi[0] - b.p_hi[0] == doctest::Approx(delta).epsilon(1e-12));
  CHECK(a.q_lo[0] - b.q_lo[0] == doctest::Approx(delta).epsilon(1e-12));
}

TEST_CASE("dispatch cost") {
  NetworkCase net = two_bus();
  net.generators[0].cost_c2 = 0.0;
  net.generators[0].cost_c1 = 1.0;
  net.generators[0].cost_c0 = 0.0;
  const std::vector<double> half = {0.5};
  CHECK(dispatch_cost(half, net) == 0.5);

  NetworkCase c14 = load_matpower(opflab::testing::data_path("case14.m"));
  std::vector<double> zero(c14.generators.size(), 0.0);
  double c0 = 0.0;
  for (const auto& g : c14.generators) c0 += g.cost_c0;
  CHECK(dispatch_cost(zero, c14) == doctest::Approx(c0));

  Gen gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p;
    double want = 0.0;
    for (auto& g : c14.generators) {
      g.cost_c2 = gen.uniform(0, 100);
      g.cost_c1 = gen.uniform(0, 100);
      g.cost_c0 = gen.uniform(0, 100);
      p.push_back(gen.uniform(0, 3));
      want += g.cost_c2 * p.back() * p.back() + g.cost_c1 * p.back() + g.cost_c0;
    }
    CHECK(dispatch_cost(p, c14) == doctest::Approx(want).epsilon(1e-13));
  }
  CHECK_THROWS_AS(dispatch_cost(half, c14), Error);
}
