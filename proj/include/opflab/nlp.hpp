#pragma once

#include <Eigen/Dense>

namespace opflab {

/// Smooth problem
///   min f(x)  s.t.  c(x) = 0,  h(x) <= 0,  lo <= x <= hi
/// with dense first and second derivatives. Infinite bounds are allowed.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual Eigen::Index num_vars() const = 0;
  virtual Eigen::Index num_eq() const = 0;
  virtual Eigen::Index num_ineq() const = 0;
  virtual void bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const = 0;

  /// Returns f(x). When given, grad is overwritten and hess is incremented.
  virtual double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                           Eigen::MatrixXd* hess) const = 0;

  /// Fills c and h; when given, jc and jh are overwritten with the Jacobians.
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::VectorXd& h,
                           Eigen::MatrixXd* jc, Eigen::MatrixXd* jh) const = 0;

  /// hess += sum_i wc_i * d2c_i + sum_j wh_j * d2h_j.
  virtual void add_constraint_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& wc,
                                      const Eigen::VectorXd& wh, Eigen::MatrixXd& hess) const = 0;
};

struct AlOptions {
  double feas_tol = 1e-6;
  double opt_tol = 1e-5;
  int max_outer = 200;
  int max_inner = 50;
  double penalty0 = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e10;
  /// Required reduction of the infeasibility per outer iteration before the
  /// penalty is grown.
  double sufficient_decrease = 0.25;
  /// Objective divisor; <= 0 means max(1, |grad f(x0)|_inf).
  double objective_scale = 0.0;
  /// Seed the multipliers from a least-squares stationarity fit at x0.
  bool estimate_multipliers = false;
};

struct AlResult {
  Eigen::VectorXd x;
  /// In the units of the unscaled objective.
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
  double objective = 0.0;
  /// max(|c|_inf, max_j max(h_j, -z_j / mu)).
  double infeasibility = 0.0;
  /// |x - P(x - grad L_A)|_inf in objective-scaled units.
  double stationarity = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool converged = false;
};

/// Augmented Lagrangian (Powell-Hestenes-Rockafellar) outer loop; each
/// subproblem is minimized over the box by a projected damped Newton method
/// with diagonal regularization.
AlResult solve_augmented_lagrangian(const NlpProblem& problem, Eigen::VectorXd x0,
                                    const AlOptions& options = {});

}  // namespace opflab
