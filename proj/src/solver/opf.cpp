#include "opflab/solver.hpp"

#include "opflab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace opflab {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has " + std::to_string(got) +
                                                  " entries, expected " + std::to_string(want));
  }
}

void screen_active_bounds(const NetworkCase& net, const std::vector<double>& p_d) {
  double lo = 0.0, hi = 0.0, load = 0.0;
  for (const Generator& g : net.generators) {
    lo += g.p_min;
    hi += g.p_max;
  }
  for (double p : p_d) load += p;
  if (hi < load || lo > load) {
    throw Error(ErrorCode::InfeasibleBounds, "total generation range [" + std::to_string(lo) + ", " +
                                                 std::to_string(hi) + "] pu cannot serve load " +
                                                 std::to_string(load) + " pu");
  }
}

// Angle variables exclude the reference bus.
std::vector<Index> angle_layout(const NetworkCase& net, Index offset) {
  std::vector<Index> idx(net.num_buses(), -1);
  const std::size_t ref = net.reference_bus();
  Index next = offset;
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    if (i != ref) idx[i] = next++;
  }
  return idx;
}

// x = [v (n), theta (n - 1), p_g (G), q_g (G)]
class AcProblem final : public NlpProblem {
 public:
  AcProblem(const NetworkCase& net, const LoadProfile& loads, bool squared_limit)
      : net_(net), loads_(loads), lines_(net.directed_lines()) {
    nb_ = static_cast<Index>(net.num_buses());
    ng_ = static_cast<Index>(net.generators.size());
    theta_ = angle_layout(net, nb_);
    pg0_ = 2 * nb_ - 1;
    qg0_ = pg0_ + ng_;
    for (std::size_t k = 0; k < lines_.size(); ++k) {
      if (std::isfinite(lines_[k].s_max)) {
        limit_row_.push_back(static_cast<Index>(limited_.size()));
        limited_.push_back(k);
        limit_value_.push_back(squared_limit ? lines_[k].s_max * lines_[k].s_max : lines_[k].s_max);
      } else {
        limit_row_.push_back(-1);
      }
    }
  }

  void use_distance_objective(const LoadFlowTarget& target) {
    distance_ = true;
    target_ = target;
  }

  Index num_vars() const override { return qg0_ + ng_; }
  Index num_eq() const override { return 2 * nb_; }
  Index num_ineq() const override {
    return 2 * static_cast<Index>(net_.branches.size()) + static_cast<Index>(limited_.size());
  }

  void bounds(VectorXd& lo, VectorXd& hi) const override {
    lo.setConstant(num_vars(), -kInf);
    hi.setConstant(num_vars(), kInf);
    for (Index i = 0; i < nb_; ++i) {
      lo[i] = net_.buses[static_cast<std::size_t>(i)].v_min;
      hi[i] = net_.buses[static_cast<std::size_t>(i)].v_max;
    }
    for (Index k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators[static_cast<std::size_t>(k)];
      lo[pg0_ + k] = g.p_min;
      hi[pg0_ + k] = g.p_max;
      lo[qg0_ + k] = g.q_min;
      hi[qg0_ + k] = g.q_max;
    }
  }

  double objective(const VectorXd& x, VectorXd* grad, MatrixXd* hess) const override {
    if (grad) grad->setZero(num_vars());
    double f = 0.0;
    if (distance_) {
      for (Index k = 0; k < ng_; ++k) {
        const double d = x[pg0_ + k] - target_.p_g[static_cast<std::size_t>(k)];
        f += d * d;
        if (grad) (*grad)[pg0_ + k] = 2.0 * d;
        if (hess) (*hess)(pg0_ + k, pg0_ + k) += 2.0;
      }
      for (Index i = 0; i < nb_; ++i) {
        const double d = x[i] - target_.v[static_cast<std::size_t>(i)];
        f += d * d;
        if (grad) (*grad)[i] = 2.0 * d;
        if (hess) (*hess)(i, i) += 2.0;
      }
      return f;
    }
    for (Index k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators[static_cast<std::size_t>(k)];
      const double p = x[pg0_ + k];
      f += (g.cost_c2 * p + g.cost_c1) * p + g.cost_c0;
      if (grad) (*grad)[pg0_ + k] = 2.0 * g.cost_c2 * p + g.cost_c1;
      if (hess) (*hess)(pg0_ + k, pg0_ + k) += 2.0 * g.cost_c2;
    }
    return f;
  }

  void constraints(const VectorXd& x, VectorXd& c, VectorXd& h, MatrixXd* jc,
                   MatrixXd* jh) const override {
    c.setZero(num_eq());
    h.setZero(num_ineq());
    if (jc) jc->setZero(num_eq(), num_vars());
    if (jh) jh->setZero(num_ineq(), num_vars());
    const Index nbr = static_cast<Index>(net_.branches.size());

    for (std::size_t k = 0; k < lines_.size(); ++k) {
      const DirectedLine& ln = lines_[k];
      const Index i = static_cast<Index>(ln.from);
      const auto loc = local(ln);
      LineFlowJet jet;
      if (jc || jh) {
        jet = line_flow_jet(x[loc[0]], x[loc[1]], theta(x, ln.from), theta(x, ln.to), ln.g, ln.b);
      } else {
        jet.value = line_flow(x[loc[0]], x[loc[1]], theta(x, ln.from), theta(x, ln.to), ln.g, ln.b);
      }
      c[i] += jet.value.p;
      c[nb_ + i] += jet.value.q;
      if (jc) {
        for (int a = 0; a < 4; ++a) {
          if (loc[a] < 0) continue;
          (*jc)(i, loc[a]) += jet.dp[a];
          (*jc)(nb_ + i, loc[a]) += jet.dq[a];
        }
      }
      const Index row = limit_row_[k];
      if (row >= 0) {
        const Index r = 2 * nbr + row;
        const double p = jet.value.p, q = jet.value.q;
        h[r] = p * p + q * q - limit_value_[static_cast<std::size_t>(row)];
        if (jh) {
          for (int a = 0; a < 4; ++a) {
            if (loc[a] >= 0) (*jh)(r, loc[a]) += 2.0 * (p * jet.dp[a] + q * jet.dq[a]);
          }
        }
      }
    }
    for (Index k = 0; k < ng_; ++k) {
      const Index bus = static_cast<Index>(net_.generators[static_cast<std::size_t>(k)].bus);
      c[bus] -= x[pg0_ + k];
      c[nb_ + bus] -= x[qg0_ + k];
      if (jc) {
        (*jc)(bus, pg0_ + k) -= 1.0;
        (*jc)(nb_ + bus, qg0_ + k) -= 1.0;
      }
    }
    for (Index i = 0; i < nb_; ++i) {
      c[i] += loads_.p_d[static_cast<std::size_t>(i)];
      c[nb_ + i] += loads_.q_d[static_cast<std::size_t>(i)];
    }
    for (Index m = 0; m < nbr; ++m) {
      const Branch& br = net_.branches[static_cast<std::size_t>(m)];
      const double d = theta(x, br.from) - theta(x, br.to);
      h[2 * m] = d - br.theta_delta;
      h[2 * m + 1] = -d - br.theta_delta;
      if (jh) {
        const Index tf = theta_[br.from], tt = theta_[br.to];
        if (tf >= 0) {
          (*jh)(2 * m, tf) += 1.0;
          (*jh)(2 * m + 1, tf) -= 1.0;
        }
        if (tt >= 0) {
          (*jh)(2 * m, tt) -= 1.0;
          (*jh)(2 * m + 1, tt) += 1.0;
        }
      }
    }
  }

  void add_constraint_hessian(const VectorXd& x, const VectorXd& wc, const VectorXd& wh,
                              MatrixXd& hess) const override {
    const Index nbr = static_cast<Index>(net_.branches.size());
    for (std::size_t k = 0; k < lines_.size(); ++k) {
      const DirectedLine& ln = lines_[k];
      const Index i = static_cast<Index>(ln.from);
      const double w_p = wc[i];
      const double w_q = wc[nb_ + i];
      const Index row = limit_row_[k];
      const double w_lim = row >= 0 ? wh[2 * nbr + row] : 0.0;
      if (w_p == 0.0 && w_q == 0.0 && w_lim == 0.0) continue;
      const auto loc = local(ln);
      const LineFlowJet jet =
          line_flow_jet(x[loc[0]], x[loc[1]], theta(x, ln.from), theta(x, ln.to), ln.g, ln.b);
      const double sp = w_p + 2.0 * w_lim * jet.value.p;
      const double sq = w_q + 2.0 * w_lim * jet.value.q;
      for (int a = 0; a < 4; ++a) {
        if (loc[a] < 0) continue;
        for (int b = 0; b < 4; ++b) {
          if (loc[b] < 0) continue;
          double v = sp * jet.hp[a][b] + sq * jet.hq[a][b];
          if (w_lim != 0.0) v += 2.0 * w_lim * (jet.dp[a] * jet.dp[b] + jet.dq[a] * jet.dq[b]);
          hess(loc[a], loc[b]) += v;
        }
      }
    }
  }

  VectorXd pack(const GridState& s) const {
    VectorXd x(num_vars());
    for (Index i = 0; i < nb_; ++i) {
      x[i] = s.v[static_cast<std::size_t>(i)];
      if (theta_[static_cast<std::size_t>(i)] >= 0) x[theta_[static_cast<std::size_t>(i)]] = s.theta[static_cast<std::size_t>(i)];
    }
    for (Index k = 0; k < ng_; ++k) {
      x[pg0_ + k] = s.p_g[static_cast<std::size_t>(k)];
      x[qg0_ + k] = s.q_g[static_cast<std::size_t>(k)];
    }
    return x;
  }

  GridState unpack(const VectorXd& x) const {
    GridState s;
    for (Index i = 0; i < nb_; ++i) {
      s.v.push_back(x[i]);
      s.theta.push_back(theta(x, static_cast<std::size_t>(i)));
    }
    for (Index k = 0; k < ng_; ++k) {
      s.p_g.push_back(x[pg0_ + k]);
      s.q_g.push_back(x[qg0_ + k]);
    }
    s.p_d = loads_.p_d;
    s.q_d = loads_.q_d;
    return s;
  }

  double max_inequality(const VectorXd& x) const {
    VectorXd c, h;
    constraints(x, c, h, nullptr, nullptr);
    return h.size() ? std::max(0.0, h.maxCoeff()) : 0.0;
  }

 private:
  double theta(const VectorXd& x, std::size_t bus) const {
    const Index t = theta_[bus];
    return t >= 0 ? x[t] : 0.0;
  }
  std::array<Index, 4> local(const DirectedLine& ln) const {
    return {static_cast<Index>(ln.from), static_cast<Index>(ln.to), theta_[ln.from], theta_[ln.to]};
  }

  const NetworkCase& net_;
  const LoadProfile& loads_;
  std::vector<DirectedLine> lines_;
  Index nb_ = 0, ng_ = 0, pg0_ = 0, qg0_ = 0;
  std::vector<Index> theta_;
  std::vector<std::size_t> limited_;
  std::vector<Index> limit_row_;
  std::vector<double> limit_value_;
  bool distance_ = false;
  LoadFlowTarget target_;
};

// x = [theta (n - 1), p_g (G)]
class DcProblem final : public NlpProblem {
 public:
  DcProblem(const NetworkCase& net, const std::vector<double>& p_d, bool squared_limit)
      : net_(net), p_d_(p_d) {
    nb_ = static_cast<Index>(net.num_buses());
    ng_ = static_cast<Index>(net.generators.size());
    theta_ = angle_layout(net, 0);
    pg0_ = nb_ - 1;
    for (std::size_t m = 0; m < net.branches.size(); ++m) {
      const double s = net.branches[m].s_max;
      if (std::isfinite(s)) {
        limited_.push_back(m);
        limit_.push_back(squared_limit ? s : std::sqrt(s));
      }
    }
  }

  Index num_vars() const override { return pg0_ + ng_; }
  Index num_eq() const override { return nb_; }
  Index num_ineq() const override {
    return 2 * static_cast<Index>(net_.branches.size() + limited_.size());
  }

  void bounds(VectorXd& lo, VectorXd& hi) const override {
    lo.setConstant(num_vars(), -kInf);
    hi.setConstant(num_vars(), kInf);
    for (Index k = 0; k < ng_; ++k) {
      lo[pg0_ + k] = net_.generators[static_cast<std::size_t>(k)].p_min;
      hi[pg0_ + k] = net_.generators[static_cast<std::size_t>(k)].p_max;
    }
  }

  double objective(const VectorXd& x, VectorXd* grad, MatrixXd* hess) const override {
    if (grad) grad->setZero(num_vars());
    double f = 0.0;
    for (Index k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators[static_cast<std::size_t>(k)];
      const double p = x[pg0_ + k];
      f += (g.cost_c2 * p + g.cost_c1) * p + g.cost_c0;
      if (grad) (*grad)[pg0_ + k] = 2.0 * g.cost_c2 * p + g.cost_c1;
      if (hess) (*hess)(pg0_ + k, pg0_ + k) += 2.0 * g.cost_c2;
    }
    return f;
  }

  void constraints(const VectorXd& x, VectorXd& c, VectorXd& h, MatrixXd* jc,
                   MatrixXd* jh) const override {
    c.setZero(num_eq());
    h.setZero(num_ineq());
    if (jc) jc->setZero(num_eq(), num_vars());
    if (jh) jh->setZero(num_ineq(), num_vars());
    const Index nbr = static_cast<Index>(net_.branches.size());

    auto add_diff = [](MatrixXd& m, Index row, Index ti, Index tj, double w) {
      if (ti >= 0) m(row, ti) += w;
      if (tj >= 0) m(row, tj) -= w;
    };

    for (Index m = 0; m < nbr; ++m) {
      const Branch& br = net_.branches[static_cast<std::size_t>(m)];
      const Index f = static_cast<Index>(br.from), t = static_cast<Index>(br.to);
      const double d = theta(x, br.from) - theta(x, br.to);
      const double flow = dc_flow(d, 0.0, br.b);  // from -> to; the reverse is its negation
      c[f] += flow;
      c[t] -= flow;
      if (jc) {
        add_diff(*jc, f, theta_[br.from], theta_[br.to], -br.b);
        add_diff(*jc, t, theta_[br.from], theta_[br.to], br.b);
      }
      h[2 * m] = d - br.theta_delta;
      h[2 * m + 1] = -d - br.theta_delta;
      if (jh) {
        add_diff(*jh, 2 * m, theta_[br.from], theta_[br.to], 1.0);
        add_diff(*jh, 2 * m + 1, theta_[br.from], theta_[br.to], -1.0);
      }
    }
    for (std::size_t r = 0; r < limited_.size(); ++r) {
      const Branch& br = net_.branches[limited_[r]];
      const double flow = dc_flow(theta(x, br.from), theta(x, br.to), br.b);
      const Index row = 2 * nbr + 2 * static_cast<Index>(r);
      h[row] = flow - limit_[r];
      h[row + 1] = -flow - limit_[r];
      if (jh) {
        add_diff(*jh, row, theta_[br.from], theta_[br.to], -br.b);
        add_diff(*jh, row + 1, theta_[br.from], theta_[br.to], br.b);
      }
    }
    for (Index k = 0; k < ng_; ++k) {
      const Index bus = static_cast<Index>(net_.generators[static_cast<std::size_t>(k)].bus);
      c[bus] -= x[pg0_ + k];
      if (jc) (*jc)(bus, pg0_ + k) -= 1.0;
    }
    for (Index i = 0; i < nb_; ++i) c[i] += p_d_[static_cast<std::size_t>(i)];
  }

  void add_constraint_hessian(const VectorXd&, const VectorXd&, const VectorXd&, MatrixXd&) const override {}

  VectorXd start() const {
    VectorXd x = VectorXd::Zero(num_vars());
    for (Index k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators[static_cast<std::size_t>(k)];
      x[pg0_ + k] = 0.5 * (g.p_min + g.p_max);
    }
    return x;
  }

  void unpack(const VectorXd& x, DcReport& r) const {
    r.theta.clear();
    r.p_g.clear();
    for (std::size_t i = 0; i < net_.num_buses(); ++i) r.theta.push_back(theta(x, i));
    for (Index k = 0; k < ng_; ++k) r.p_g.push_back(x[pg0_ + k]);
  }

 private:
  double theta(const VectorXd& x, std::size_t bus) const {
    const Index t = theta_[bus];
    return t >= 0 ? x[t] : 0.0;
  }

  const NetworkCase& net_;
  const std::vector<double>& p_d_;
  Index nb_ = 0, ng_ = 0, pg0_ = 0;
  std::vector<Index> theta_;
  std::vector<std::size_t> limited_;
  std::vector<double> limit_;
};

AlOptions to_al(const SolverOptions& o) {
  AlOptions a;
  a.feas_tol = o.feas_tol;
  a.opt_tol = o.opt_tol;
  a.max_outer = o.max_outer;
  a.max_inner = o.max_inner;
  a.penalty0 = o.penalty0;
  a.penalty_growth = o.penalty_growth;
  return a;
}

void check_loads(const NetworkCase& net, const LoadProfile& loads) {
  require(loads.p_d.size(), net.num_buses(), "p_d");
  require(loads.q_d.size(), net.num_buses(), "q_d");
}

SolveReport finish(const AcProblem& problem, const AlResult& al, const NetworkCase& net) {
  SolveReport r;
  r.state = problem.unpack(al.x);
  r.objective = al.objective;
  r.max_residual = kcl_residual(r.state, all_flows(r.state, net), net).max_abs();
  r.max_inequality = problem.max_inequality(al.x);
  r.stationarity = al.stationarity;
  r.iterations = al.outer_iterations;
  r.inner_iterations = al.inner_iterations;
  r.converged = al.converged;
  return r;
}

}  // namespace

SolveReport solve_ac_opf(const NetworkCase& net, const LoadProfile& loads, const GridState* warm_start,
                         const SolverOptions& options) {
  check_loads(net, loads);
  screen_active_bounds(net, loads.p_d);
  AcProblem problem(net, loads, options.squared_limit);
  AlOptions al = to_al(options);
  VectorXd x0;
  if (warm_start) {
    check_dims(*warm_start, net);
    x0 = problem.pack(*warm_start);
    al.estimate_multipliers = true;
  } else {
    x0 = problem.pack(flat_state(net));
  }
  return finish(problem, solve_augmented_lagrangian(problem, x0, al), net);
}

SolveReport solve_load_flow(const NetworkCase& net, const LoadProfile& loads, const LoadFlowTarget& target,
                            const GridState* warm_start, const SolverOptions& options) {
  check_loads(net, loads);
  require(target.p_g.size(), net.generators.size(), "target p_g");
  require(target.v.size(), net.num_buses(), "target v");
  screen_active_bounds(net, loads.p_d);
  AcProblem problem(net, loads, options.squared_limit);
  problem.use_distance_objective(target);

  GridState start = warm_start ? *warm_start : flat_state(net);
  if (warm_start) check_dims(start, net);
  start.v = target.v;
  start.p_g = target.p_g;
  AlOptions al = to_al(options);
  al.objective_scale = 1.0;
  return finish(problem, solve_augmented_lagrangian(problem, problem.pack(start), al), net);
}

SolverOptions dc_default_options() {
  SolverOptions o;
  o.feas_tol = 1e-10;
  o.opt_tol = 1e-9;
  return o;
}

DcReport solve_dc_opf(const NetworkCase& net, const std::vector<double>& p_d, const SolverOptions& options) {
  require(p_d.size(), net.num_buses(), "p_d");
  screen_active_bounds(net, p_d);
  DcProblem problem(net, p_d, options.squared_limit);
  const AlResult al = solve_augmented_lagrangian(problem, problem.start(), to_al(options));
  DcReport r;
  problem.unpack(al.x, r);
  r.objective = al.objective;
  r.iterations = al.outer_iterations;
  r.converged = al.converged;
  for (double v : dc_kcl_residual(net, r.theta, r.p_g, p_d)) r.max_residual = std::max(r.max_residual, std::abs(v));
  return r;
}

std::vector<double> dc_kcl_residual(const NetworkCase& net, const std::vector<double>& theta,
                                    const std::vector<double>& p_g, const std::vector<double>& p_d) {
  require(theta.size(), net.num_buses(), "theta");
  require(p_g.size(), net.generators.size(), "p_g");
  require(p_d.size(), net.num_buses(), "p_d");
  std::vector<double> r(p_d);
  for (const DirectedLine& ln : net.directed_lines()) r[ln.from] += dc_flow(theta[ln.from], theta[ln.to], ln.b);
  for (std::size_t k = 0; k < p_g.size(); ++k) r[net.generators[k].bus] -= p_g[k];
  return r;
}

}  // namespace opflab
