#pragma once

#include "opflab/nn/tape.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace opflab::nn {

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of w in place; t is the 1-based step.
/// Throws DimensionMismatch on inconsistent spans.
void adam_step(std::span<double> w, std::span<const double> grad, std::span<double> m, std::span<double> v,
               std::int64_t t, const AdamConfig& config);

/// Adam over a fixed parameter list; ascent = true maximizes instead.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {}, bool ascent = false);

  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> scratch_;
  AdamConfig config_;
  bool ascent_ = false;
  std::int64_t t_ = 0;
};

}  // namespace opflab::nn
