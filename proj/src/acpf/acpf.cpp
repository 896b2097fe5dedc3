#include "opflab/acpf.hpp"

#include "opflab/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace opflab {

namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has " + std::to_string(got) +
                                                  " entries, expected " + std::to_string(want));
  }
}

double pos(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

GridState flat_state(const NetworkCase& net) {
  GridState s;
  const std::size_t n = net.num_buses();
  s.v.assign(n, 1.0);
  s.theta.assign(n, 0.0);
  for (const Generator& g : net.generators) {
    s.p_g.push_back(0.5 * (g.p_min + g.p_max));
    s.q_g.push_back(0.5 * (g.q_min + g.q_max));
  }
  s.p_d = net.p_load;
  s.q_d = net.q_load;
  return s;
}

void check_dims(const GridState& state, const NetworkCase& net) {
  const std::size_t n = net.num_buses();
  const std::size_t ng = net.generators.size();
  require_size(state.v.size(), n, "v");
  require_size(state.theta.size(), n, "theta");
  require_size(state.p_d.size(), n, "p_d");
  require_size(state.q_d.size(), n, "q_d");
  require_size(state.p_g.size(), ng, "p_g");
  require_size(state.q_g.size(), ng, "q_g");
}

LineFlow line_flow(double v_i, double v_j, double theta_i, double theta_j, double g, double b) {
  const double d = theta_i - theta_j;
  const double s = std::sin(d);
  const double c = std::cos(d);
  const double vv = v_i * v_j;
  return {g * v_i * v_i - vv * (b * s + g * c), -b * v_i * v_i - vv * (g * s - b * c)};
}

LineFlowJet line_flow_jet(double vi, double vj, double ti, double tj, double g, double b) {
  const double d = ti - tj;
  const double s = std::sin(d);
  const double c = std::cos(d);
  const double vv = vi * vj;
  // A = b s + g c, B = b c - g s = dA/dd
  // C = g s - b c, D = g c + b s = dC/dd
  const double A = b * s + g * c;
  const double B = b * c - g * s;
  const double C = g * s - b * c;
  const double D = g * c + b * s;

  LineFlowJet jet;
  jet.value = {g * vi * vi - vv * A, -b * vi * vi - vv * C};

  // order: 0 = v_i, 1 = v_j, 2 = theta_i, 3 = theta_j
  jet.dp = {2.0 * g * vi - vj * A, -vi * A, -vv * B, vv * B};
  jet.dq = {-2.0 * b * vi - vj * C, -vi * C, -vv * D, vv * D};

  auto& hp = jet.hp;
  hp[0][0] = 2.0 * g;
  hp[0][1] = -A;
  hp[0][2] = -vj * B;
  hp[0][3] = vj * B;
  hp[1][1] = 0.0;
  hp[1][2] = -vi * B;
  hp[1][3] = vi * B;
  hp[2][2] = vv * A;
  hp[2][3] = -vv * A;
  hp[3][3] = vv * A;

  auto& hq = jet.hq;
  hq[0][0] = -2.0 * b;
  hq[0][1] = -C;
  hq[0][2] = -vj * D;
  hq[0][3] = vj * D;
  hq[1][1] = 0.0;
  hq[1][2] = -vi * D;
  hq[1][3] = vi * D;
  hq[2][2] = vv * C;
  hq[2][3] = -vv * C;
  hq[3][3] = vv * C;

  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < r; ++k) {
      hp[r][k] = hp[k][r];
      hq[r][k] = hq[k][r];
    }
  }
  return jet;
}

FlowSet all_flows(const GridState& state, const NetworkCase& net) {
  check_dims(state, net);
  FlowSet f;
  f.p_f.reserve(net.num_lines());
  f.q_f.reserve(net.num_lines());
  for (const DirectedLine& ln : net.directed_lines()) {
    const LineFlow lf = line_flow(state.v[ln.from], state.v[ln.to], state.theta[ln.from],
                                  state.theta[ln.to], ln.g, ln.b);
    f.p_f.push_back(lf.p);
    f.q_f.push_back(lf.q);
  }
  return f;
}

double KclResidual::max_abs() const {
  double m = 0.0;
  for (double r : p) m = std::max(m, std::abs(r));
  for (double r : q) m = std::max(m, std::abs(r));
  return m;
}

KclResidual kcl_residual(const GridState& state, const FlowSet& flows, const NetworkCase& net) {
  check_dims(state, net);
  require_size(flows.p_f.size(), net.num_lines(), "p_f");
  require_size(flows.q_f.size(), net.num_lines(), "q_f");
  const std::size_t n = net.num_buses();
  KclResidual r;
  r.p.assign(n, 0.0);
  r.q.assign(n, 0.0);
  const auto lines = net.directed_lines();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    r.p[lines[k].from] += flows.p_f[k];
    r.q[lines[k].from] += flows.q_f[k];
  }
  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    r.p[net.generators[k].bus] -= state.p_g[k];
    r.q[net.generators[k].bus] -= state.q_g[k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    r.p[i] += state.p_d[i];
    r.q[i] += state.q_d[i];
  }
  return r;
}

double dispatch_cost(std::span<const double> p_g, const NetworkCase& net) {
  require_size(p_g.size(), net.generators.size(), "p_g");
  double total = 0.0;
  for (std::size_t k = 0; k < p_g.size(); ++k) {
    const Generator& g = net.generators[k];
    total += (g.cost_c2 * p_g[k] + g.cost_c1) * p_g[k] + g.cost_c0;
  }
  return total;
}

std::string_view family_tag(Family f) {
  static constexpr std::array<std::string_view, kNumFamilies> tags = {"2a", "2b", "3a", "3b", "4",
                                                                      "5a", "5b", "6a", "6b"};
  return tags[static_cast<std::size_t>(f)];
}

SatisfiabilityDegrees satisfiability_degrees(const GridState& state, const FlowSet& flows,
                                             const FlowSet* truth, const NetworkCase& net,
                                             const ConstraintOptions& options, bool include_ohm) {
  check_dims(state, net);
  const std::size_t e = net.num_lines();
  require_size(flows.p_f.size(), e, "p_f");
  require_size(flows.q_f.size(), e, "q_f");
  if (include_ohm && truth == nullptr) {
    throw Error(ErrorCode::MissingTruthFlows, "Ohm's-law degrees need ground-truth flows");
  }

  SatisfiabilityDegrees s;
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    s.v_lo.push_back(net.buses[i].v_min - state.v[i]);
    s.v_hi.push_back(state.v[i] - net.buses[i].v_max);
  }
  const auto lines = net.directed_lines();
  for (std::size_t k = 0; k < e; ++k) {
    const DirectedLine& ln = lines[k];
    const double d = state.theta[ln.from] - state.theta[ln.to];
    s.angle_lo.push_back(-d - ln.theta_delta);
    s.angle_hi.push_back(d - ln.theta_delta);
    const double limit = options.squared_limit ? ln.s_max * ln.s_max : ln.s_max;
    s.flow_limit.push_back(flows.p_f[k] * flows.p_f[k] + flows.q_f[k] * flows.q_f[k] - limit);
  }
  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    const Generator& g = net.generators[k];
    s.p_lo.push_back(g.p_min - state.p_g[k]);
    s.p_hi.push_back(state.p_g[k] - g.p_max);
    s.q_lo.push_back(g.q_min - state.q_g[k]);
    s.q_hi.push_back(state.q_g[k] - g.q_max);
  }
  if (include_ohm) {
    require_size(truth->p_f.size(), e, "truth p_f");
    require_size(truth->q_f.size(), e, "truth q_f");
    for (std::size_t k = 0; k < e; ++k) {
      s.ohm_p.push_back(flows.p_f[k] - truth->p_f[k]);
      s.ohm_q.push_back(flows.q_f[k] - truth->q_f[k]);
    }
  }
  const KclResidual r = kcl_residual(state, flows, net);
  s.kcl_p = r.p;
  s.kcl_q = r.q;
  return s;
}

double ViolationVector::sum() const {
  double t = 0.0;
  for (double v : nu) t += v;
  return t;
}

double ViolationVector::max() const { return *std::max_element(nu.begin(), nu.end()); }

ViolationVector violation_degrees(const SatisfiabilityDegrees& s, const NetworkCase& net,
                                  const ConstraintOptions& options) {
  const double n = static_cast<double>(net.num_buses());
  const double e = static_cast<double>(net.num_lines());
  ViolationVector out;

  auto ineq_pair = [](const std::vector<double>& lo, const std::vector<double>& hi) {
    double t = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) t += pos(lo[i]) + pos(hi[i]);
    return t;
  };
  auto eq_sum = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += std::abs(x);
    return t;
  };

  out[Family::VoltageBounds] = ineq_pair(s.v_lo, s.v_hi) / n;
  out[Family::AngleDifference] = ineq_pair(s.angle_lo, s.angle_hi) / e;
  out[Family::ActiveGeneration] = ineq_pair(s.p_lo, s.p_hi) / n;
  out[Family::ReactiveGeneration] = ineq_pair(s.q_lo, s.q_hi) / n;
  double flow = 0.0;
  for (double x : s.flow_limit) flow += pos(x);
  out[Family::FlowLimit] = flow / e;
  out[Family::OhmActive] = eq_sum(s.ohm_p) / e;
  out[Family::OhmReactive] = eq_sum(s.ohm_q) / e;

  if (options.paper_exact_nu6) {
    double tp = 0.0;
    double tq = 0.0;
    for (const DirectedLine& ln : net.directed_lines()) {
      tp += std::abs(s.kcl_p[ln.from]);
      tq += std::abs(s.kcl_q[ln.from]);
    }
    out[Family::KclActive] = tp / e;
    out[Family::KclReactive] = tq / e;
  } else {
    out[Family::KclActive] = eq_sum(s.kcl_p) / n;
    out[Family::KclReactive] = eq_sum(s.kcl_q) / n;
  }
  return out;
}

ViolationVector violation_degrees(const GridState& state, const FlowSet& flows, const FlowSet* truth,
                                  const NetworkCase& net, const ConstraintOptions& options,
                                  bool include_ohm) {
  return violation_degrees(satisfiability_degrees(state, flows, truth, net, options, include_ohm), net,
                           options);
}

}  // namespace opflab
