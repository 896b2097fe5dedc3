#pragma once

#include "opflab/nn/tensor.hpp"

namespace opflab::nn {

enum class Activation { Identity, Relu };

/// Serial is the naive reference loop nest kept for testing; Parallel
/// splits the work into fixed-size blocks across OpenMP threads. Block
/// boundaries do not depend on the thread count, so Parallel results are
/// bitwise identical for any number of threads.
enum class Backend { Serial, Parallel };

/// y = act(x W^T + b); x is batch x in, W is out x in, b is 1 x out.
void dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act, Tensor& y,
                   Backend backend);

/// Given y from dense_forward and dL/dy, accumulates dL/dx (if dx is not
/// null), dL/dW and dL/db. The ReLU derivative at 0 is 0.
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy, Activation act,
                    Tensor* dx, Tensor& dw, Tensor& db, Backend backend);

/// Threads used by Parallel kernels and data-parallel loops: OPFLAB_THREADS
/// when set to a positive integer, otherwise the OpenMP default.
int thread_budget();
/// Overrides the budget for the rest of the process; n <= 0 restores the
/// environment/OpenMP default.
void set_thread_budget(int n);

}  // namespace opflab::nn
