#include "opflab/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace opflab {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

VectorXd project(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// The augmented Lagrangian for fixed multipliers and penalty.
class Merit {
 public:
  Merit(const NlpProblem& p, const VectorXd& y, const VectorXd& z, double mu, double scale)
      : p_(p), y_(y), z_(z), mu_(mu), inv_scale_(1.0 / scale) {
    c_.resize(p.num_eq());
    h_.resize(p.num_ineq());
  }

  double value(const VectorXd& x) {
    const double f = p_.objective(x, nullptr, nullptr) * inv_scale_;
    p_.constraints(x, c_, h_, nullptr, nullptr);
    return f + combine();
  }

  double derivatives(const VectorXd& x, VectorXd& grad, MatrixXd& hess) {
    const Index nv = p_.num_vars();
    hess.setZero(nv, nv);
    const double f = p_.objective(x, &grad, &hess) * inv_scale_;
    grad *= inv_scale_;
    hess *= inv_scale_;
    p_.constraints(x, c_, h_, &jc_, &jh_);

    const VectorXd wc = y_ + mu_ * c_;
    const VectorXd wh = (z_ + mu_ * h_).cwiseMax(0.0);
    if (jc_.rows() > 0) {
      grad.noalias() += jc_.transpose() * wc;
      hess.noalias() += mu_ * jc_.transpose() * jc_;
    }
    if (jh_.rows() > 0) {
      grad.noalias() += jh_.transpose() * wh;
      for (Index j = 0; j < jh_.rows(); ++j) {
        if (wh[j] > 0.0) hess.noalias() += mu_ * jh_.row(j).transpose() * jh_.row(j);
      }
    }
    p_.add_constraint_hessian(x, wc, wh, hess);
    return f + combine();
  }

 private:
  double combine() const {
    double t = y_.dot(c_) + 0.5 * mu_ * c_.squaredNorm();
    for (Index j = 0; j < h_.size(); ++j) {
      const double s = std::max(0.0, z_[j] + mu_ * h_[j]);
      t += (s * s - z_[j] * z_[j]) / (2.0 * mu_);
    }
    return t;
  }

  const NlpProblem& p_;
  const VectorXd& y_;
  const VectorXd& z_;
  double mu_;
  double inv_scale_;
  VectorXd c_, h_;
  MatrixXd jc_, jh_;
};

struct InnerResult {
  double stationarity = kInf;
  int iterations = 0;
};

// Projected Newton (two-metric) on the box, Armijo search along the
// projection arc.
InnerResult minimize_box(Merit& merit, VectorXd& x, const VectorXd& lo, const VectorXd& hi, double tol,
                         int max_iter) {
  const Index nv = x.size();
  VectorXd grad(nv);
  MatrixXd hess(nv, nv);
  InnerResult out;
  double delta_prev = 0.0;

  for (int it = 0; it <= max_iter; ++it) {
    const double phi = merit.derivatives(x, grad, hess);
    out.stationarity = (x - project(x - grad, lo, hi)).lpNorm<Eigen::Infinity>();
    if (out.stationarity <= tol || it == max_iter) break;
    out.iterations = it + 1;

    const double eps = std::min(1e-3, out.stationarity);
    std::vector<Index> free_idx;
    std::vector<char> active(static_cast<std::size_t>(nv), 0);
    for (Index i = 0; i < nv; ++i) {
      const bool at_lo = x[i] <= lo[i] + eps && grad[i] > 0.0;
      const bool at_hi = x[i] >= hi[i] - eps && grad[i] < 0.0;
      if (at_lo || at_hi) {
        active[static_cast<std::size_t>(i)] = 1;
      } else {
        free_idx.push_back(i);
      }
    }

    VectorXd d = VectorXd::Zero(nv);
    for (Index i = 0; i < nv; ++i) {
      if (active[static_cast<std::size_t>(i)]) d[i] = grad[i] / std::max(hess(i, i), 1e-8);
    }
    const Index nf = static_cast<Index>(free_idx.size());
    if (nf > 0) {
      MatrixXd hf(nf, nf);
      VectorXd gf(nf);
      for (Index a = 0; a < nf; ++a) {
        gf[a] = grad[free_idx[a]];
        for (Index b = 0; b < nf; ++b) hf(a, b) = hess(free_idx[a], free_idx[b]);
      }
      const double diag_scale = std::max(1.0, hf.diagonal().cwiseAbs().maxCoeff());
      double delta = 0.0;
      Eigen::LLT<MatrixXd> llt;
      VectorXd df;
      for (int attempt = 0; attempt < 40; ++attempt) {
        MatrixXd reg = hf;
        reg.diagonal().array() += delta;
        llt.compute(reg);
        if (llt.info() == Eigen::Success) {
          df = llt.solve(gf);
          if (df.allFinite() && df.dot(gf) > 0.0) break;
        }
        delta = delta == 0.0 ? std::max(1e-10 * diag_scale, delta_prev / 4.0) : 10.0 * delta;
        df.resize(0);
      }
      if (df.size() == 0) df = gf;
      delta_prev = delta;
      for (Index a = 0; a < nf; ++a) d[free_idx[a]] = df[a];
    }

    double alpha = 1.0;
    bool accepted = false;
    VectorXd trial(nv);
    for (int ls = 0; ls < kMaxBacktracks; ++ls) {
      trial = project(x - alpha * d, lo, hi);
      const double decrease = grad.dot(x - trial);
      const double phit = merit.value(trial);
      if (std::isfinite(phit) && phit <= phi - kArmijo * std::max(decrease, 0.0) && phit <= phi) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Fall back to a scaled projected-gradient arc.
      const double gscale = 1.0 / std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
      alpha = 1.0;
      for (int ls = 0; ls < kMaxBacktracks; ++ls) {
        trial = project(x - alpha * gscale * grad, lo, hi);
        const double phit = merit.value(trial);
        if (std::isfinite(phit) && phit <= phi - kArmijo * grad.dot(x - trial)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) break;
    x = trial;
  }
  return out;
}

void estimate_multipliers(const NlpProblem& p, const VectorXd& x, const VectorXd& lo, const VectorXd& hi,
                          double scale, VectorXd& y, VectorXd& z) {
  const Index nv = p.num_vars();
  VectorXd grad(nv);
  MatrixXd hess = MatrixXd::Zero(nv, nv);
  p.objective(x, &grad, &hess);
  grad /= scale;
  VectorXd c(p.num_eq()), h(p.num_ineq());
  MatrixXd jc, jh;
  p.constraints(x, c, h, &jc, &jh);

  std::vector<Index> free_idx;
  for (Index i = 0; i < nv; ++i) {
    if (x[i] > lo[i] + 1e-9 && x[i] < hi[i] - 1e-9) free_idx.push_back(i);
  }
  std::vector<Index> near;
  for (Index j = 0; j < h.size(); ++j) {
    if (h[j] > -1e-4) near.push_back(j);
  }
  const Index m = jc.rows() + static_cast<Index>(near.size());
  const Index nf = static_cast<Index>(free_idx.size());
  if (m == 0 || nf == 0) return;
  MatrixXd a(nf, m);
  VectorXd rhs(nf);
  for (Index r = 0; r < nf; ++r) {
    const Index i = free_idx[r];
    rhs[r] = -grad[i];
    for (Index k = 0; k < jc.rows(); ++k) a(r, k) = jc(k, i);
    for (std::size_t k = 0; k < near.size(); ++k) a(r, jc.rows() + static_cast<Index>(k)) = jh(near[k], i);
  }
  const VectorXd sol = a.completeOrthogonalDecomposition().solve(rhs);
  if (!sol.allFinite()) return;
  y = sol.head(jc.rows());
  for (std::size_t k = 0; k < near.size(); ++k) z[near[k]] = std::max(0.0, sol[jc.rows() + static_cast<Index>(k)]);
}

}  // namespace

AlResult solve_augmented_lagrangian(const NlpProblem& problem, VectorXd x0, const AlOptions& options) {
  const Index nv = problem.num_vars();
  VectorXd lo(nv), hi(nv);
  problem.bounds(lo, hi);

  AlResult res;
  res.x = project(x0, lo, hi);
  VectorXd y = VectorXd::Zero(problem.num_eq());
  VectorXd z = VectorXd::Zero(problem.num_ineq());

  double scale = options.objective_scale;
  if (scale <= 0.0) {
    VectorXd g(nv);
    MatrixXd hdummy = MatrixXd::Zero(nv, nv);
    problem.objective(res.x, &g, &hdummy);
    scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
  }
  if (options.estimate_multipliers) estimate_multipliers(problem, res.x, lo, hi, scale, y, z);

  double mu = options.penalty0;
  double prev_infeas = kInf;
  VectorXd c(problem.num_eq()), h(problem.num_ineq());

  for (int k = 1; k <= options.max_outer; ++k) {
    Merit merit(problem, y, z, mu, scale);
    const InnerResult inner = minimize_box(merit, res.x, lo, hi, options.opt_tol, options.max_inner);
    res.outer_iterations = k;
    res.inner_iterations += inner.iterations;
    res.stationarity = inner.stationarity;

    problem.constraints(res.x, c, h, nullptr, nullptr);
    double infeas = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;
    for (Index j = 0; j < h.size(); ++j) infeas = std::max(infeas, std::max(h[j], -z[j] / mu));
    res.infeasibility = infeas;

    y += mu * c;
    z = (z + mu * h).cwiseMax(0.0);
    if (infeas <= options.feas_tol && inner.stationarity <= options.opt_tol) {
      res.converged = true;
      break;
    }
    if (infeas > options.sufficient_decrease * prev_infeas) {
      mu = std::min(mu * options.penalty_growth, options.penalty_max);
    }
    prev_infeas = infeas;
  }
  res.eq_multipliers = y * scale;
  res.ineq_multipliers = z * scale;
  res.objective = problem.objective(res.x, nullptr, nullptr);
  return res;
}

}  // namespace opflab
