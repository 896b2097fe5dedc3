#pragma once

#include "opflab/nn/layers.hpp"

#include <Eigen/Core>

#include <vector>

namespace opflab::nn {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-precision, inference-only copy of a dense stack. Runs on the
/// calling thread; callers parallelize over row blocks.
class FrozenMlp {
 public:
  FrozenMlp() = default;
  explicit FrozenMlp(const std::vector<DenseLayer>& layers);

  bool empty() const { return layers_.empty(); }
  std::size_t in() const { return static_cast<std::size_t>(layers_.front().w_t.rows()); }
  std::size_t out() const { return static_cast<std::size_t>(layers_.back().w_t.cols()); }

  /// y = f(x) for x of shape rows x in(). `scratch` is reused between calls.
  void infer(const Eigen::Ref<const RowMatrixF>& x, RowMatrixF& y, RowMatrixF& scratch) const;

 private:
  struct Layer {
    Eigen::MatrixXf w_t;  // in x out
    Eigen::RowVectorXf b;
    Activation act = Activation::Identity;
  };
  std::vector<Layer> layers_;
};

}  // namespace opflab::nn
