#pragma once

#include "opflab/acpf.hpp"
#include "opflab/grid_io.hpp"
#include "opflab/nlp.hpp"

#include <vector>

namespace opflab {

struct LoadProfile {
  std::vector<double> p_d;
  std::vector<double> q_d;
};

inline LoadProfile nominal_loads(const NetworkCase& net) { return {net.p_load, net.q_load}; }

struct SolverOptions {
  double feas_tol = 1e-6;
  double opt_tol = 1e-5;
  int max_outer = 200;
  int max_inner = 50;
  double penalty0 = 10.0;
  double penalty_growth = 10.0;
  /// Flow limit form shared with the violation degrees.
  bool squared_limit = false;
};

struct SolveReport {
  GridState state;
  double objective = 0.0;
  /// Largest absolute KCL residual of the returned state (pu).
  double max_residual = 0.0;
  /// Largest violation of the angle-difference and flow-limit inequalities.
  double max_inequality = 0.0;
  /// Projected-gradient norm of the final subproblem, objective-scaled.
  double stationarity = 0.0;
  int iterations = 0;
  int inner_iterations = 0;
  bool converged = false;
};

/// Minimum-cost dispatch under the full AC model. Flat start unless a warm
/// start is given. Throws InfeasibleBounds when total generation limits
/// cannot meet total active load; hitting the iteration cap yields
/// converged = false.
SolveReport solve_ac_opf(const NetworkCase& net, const LoadProfile& loads,
                         const GridState* warm_start = nullptr, const SolverOptions& options = {});

/// Targets for the restoration problem: p_g per generator, v per bus.
struct LoadFlowTarget {
  std::vector<double> p_g;
  std::vector<double> v;
};

/// Closest AC-feasible point to the target in the (p_g, v) least-squares
/// sense. Starts from the target clamped to bounds; angles and reactive
/// dispatch come from the warm start when given, else zero angles and
/// mid-range reactive dispatch.
SolveReport solve_load_flow(const NetworkCase& net, const LoadProfile& loads, const LoadFlowTarget& target,
                            const GridState* warm_start = nullptr, const SolverOptions& options = {});

struct DcReport {
  std::vector<double> p_g;    // per generator
  std::vector<double> theta;  // per bus, reference at 0
  double objective = 0.0;
  double max_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Tolerances tighter than the AC defaults: the problem is a convex QP.
SolverOptions dc_default_options();

/// Quadratic-cost dispatch under the linear flow model. Line limits are
/// |p_f| <= sqrt(s_max) in the default flow-limit form and |p_f| <= s_max
/// with squared_limit.
DcReport solve_dc_opf(const NetworkCase& net, const std::vector<double>& p_d,
                      const SolverOptions& options = dc_default_options());

/// DC bus balance: sum_{(ij) leaving i} -b (theta_i - theta_j) - (p_g at i - p_d[i]).
std::vector<double> dc_kcl_residual(const NetworkCase& net, const std::vector<double>& theta,
                                    const std::vector<double>& p_g, const std::vector<double>& p_d);

}  // namespace opflab
