#include "opflab/nn/adam.hpp"

#include "opflab/error.hpp"

#include <cmath>

namespace opflab::nn {

void adam_step(std::span<double> w, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::int64_t t, const AdamConfig& c) {
  if (grad.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "adam_step: parameter, gradient and moment sizes differ");
  }
  if (t < 1) throw Error(ErrorCode::InvalidConfig, "adam_step: step counter must start at 1");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= c.alpha * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config, bool ascent)
    : params_(std::move(params)), config_(config), ascent_(ascent) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    std::span<const double> g = p.grad.values();
    if (ascent_) {
      scratch_.assign(g.begin(), g.end());
      for (double& x : scratch_) x = -x;
      g = scratch_;
    }
    adam_step(p.value.values(), g, m_[k], v_[k], t_, config_);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace opflab::nn
