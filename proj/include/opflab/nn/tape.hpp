#pragma once

#include "opflab/nn/kernels.hpp"
#include "opflab/nn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace opflab::nn {

/// A trainable tensor and the adjoint accumulated into it by Tape::backward.
struct Parameter {
  Tensor value;
  Tensor grad;

  explicit Parameter(Tensor v = {}) : value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode recorder for matrix-valued computations. A tape is used by
/// one thread; Parameter adjoints are accumulated when backward() runs.
class Tape {
 public:
  explicit Tape(Backend backend = Backend::Parallel) : backend_(backend) {}

  Backend backend() const { return backend_; }

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node, then
  /// adds parameter adjoints into Parameter::grad. The loss must be 1x1 and
  /// recorded on this tape; throws TapeNotRecorded otherwise.
  void backward(Var loss);

  /// Adjoint of a node after backward().
  const Tensor& grad(Var v) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Used by the op implementations.
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, std::size_t)> back;
  };
  Var record(Tensor value, bool needs_grad, std::function<void(Tape&, std::size_t)> back);
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  Backend backend_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Binary elementwise ops accept a right operand of
// the same shape, a 1 x cols row (broadcast over rows), or a 1 x 1 scalar.
// ---------------------------------------------------------------------------

Var dense(Var x, Var w, Var b, Activation act);
Var relu(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sin(Var a);
Var cos(Var a);
Var square(Var a);
/// d|x|/dx at 0 is 0.
Var abs(Var a);
/// max(0, x); same as relu.
Var hinge(Var a);
Var concat_cols(const std::vector<Var>& parts);
/// out[:, k] = a[:, index[k]]
Var gather_cols(Var a, std::vector<std::size_t> index);
/// out has `cols` columns; out[:, index[k]] += a[:, k]
Var scatter_add_cols(Var a, std::vector<std::size_t> index, std::size_t cols);
/// rows x 1
Var row_sum(Var a);
/// 1 x 1
Var sum(Var a);
/// 1 x 1, sum divided by the number of rows
Var batch_mean(Var a);

}  // namespace opflab::nn
