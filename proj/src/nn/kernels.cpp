#include "opflab/nn/kernels.hpp"

#include "opflab/error.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

namespace opflab::nn {

namespace {

constexpr std::size_t kRowBlock = 32;
constexpr std::size_t kOutBlock = 32;

void check_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dense layer " + std::to_string(w.cols()) + "->" + std::to_string(w.rows()) +
                    " given input width " + std::to_string(x.cols()) + " and bias " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

std::size_t blocks(std::size_t n, std::size_t block) { return (n + block - 1) / block; }

// ----------------------------------------------------------------- serial --

void forward_serial(const Tensor& x, const Tensor& w, const Tensor& b, Activation act, Tensor& y) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double s = b(0, o);
      for (std::size_t i = 0; i < x.cols(); ++i) s += w(o, i) * x(r, i);
      y(r, o) = act == Activation::Relu && s <= 0.0 ? 0.0 : s;
    }
  }
}

void backward_serial(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy, Activation act,
                     Tensor* dx, Tensor& dw, Tensor& db) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double dz = dy(r, o);
      if (act == Activation::Relu && y(r, o) <= 0.0) dz = 0.0;
      if (dz == 0.0) continue;
      db(0, o) += dz;
      for (std::size_t i = 0; i < x.cols(); ++i) {
        dw(o, i) += dz * x(r, i);
        if (dx) (*dx)(r, i) += dz * w(o, i);
      }
    }
  }
}

// --------------------------------------------------------------- parallel --

void forward_parallel(const Tensor& x, const Tensor& w, const Tensor& b, Activation act, Tensor& y) {
  const auto xm = x.map();
  const auto wm = w.map();
  const auto bm = b.map();
  auto ym = y.map();
  const std::size_t nblk = blocks(x.rows(), kRowBlock);
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (nblk > 1)
  for (std::size_t k = 0; k < nblk; ++k) {
    const auto r0 = static_cast<Eigen::Index>(k * kRowBlock);
    const auto nr = static_cast<Eigen::Index>(std::min(kRowBlock, x.rows() - k * kRowBlock));
    auto yb = ym.middleRows(r0, nr);
    yb.noalias() = xm.middleRows(r0, nr) * wm.transpose();
    yb.rowwise() += bm.row(0);
    if (act == Activation::Relu) yb = yb.cwiseMax(0.0);
  }
}

void backward_parallel(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy, Activation act,
                       Tensor* dx, Tensor& dw, Tensor& db) {
  RowMatrix dz = dy.map();
  if (act == Activation::Relu) {
    dz = (y.map().array() > 0.0).select(dz, 0.0);
  }
  const auto xm = x.map();
  const auto wm = w.map();
  const int threads = thread_budget();

  if (dx) {
    auto dxm = dx->map();
    const std::size_t nblk = blocks(x.rows(), kRowBlock);
#pragma omp parallel for schedule(static) num_threads(threads) if (nblk > 1)
    for (std::size_t k = 0; k < nblk; ++k) {
      const auto r0 = static_cast<Eigen::Index>(k * kRowBlock);
      const auto nr = static_cast<Eigen::Index>(std::min(kRowBlock, x.rows() - k * kRowBlock));
      dxm.middleRows(r0, nr).noalias() += dz.middleRows(r0, nr) * wm;
    }
  }

  auto dwm = dw.map();
  auto dbm = db.map();
  const std::size_t nblk = blocks(w.rows(), kOutBlock);
#pragma omp parallel for schedule(static) num_threads(threads) if (nblk > 1)
  for (std::size_t k = 0; k < nblk; ++k) {
    const auto o0 = static_cast<Eigen::Index>(k * kOutBlock);
    const auto no = static_cast<Eigen::Index>(std::min(kOutBlock, w.rows() - k * kOutBlock));
    dwm.middleRows(o0, no).noalias() += dz.middleCols(o0, no).transpose() * xm;
    dbm.middleCols(o0, no) += dz.middleCols(o0, no).colwise().sum();
  }
}

}  // namespace

namespace {
std::atomic<int> g_thread_override{0};
}

int thread_budget() {
  if (const int o = g_thread_override.load(std::memory_order_relaxed); o > 0) return o;
  static const int budget = [] {
    if (const char* env = std::getenv("OPFLAB_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    return omp_get_max_threads();
  }();
  return budget;
}

void set_thread_budget(int n) { g_thread_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act, Tensor& y,
                   Backend backend) {
  check_dense(x, w, b);
  if (!(y.rows() == x.rows() && y.cols() == w.rows())) y = Tensor(x.rows(), w.rows());
  if (backend == Backend::Serial) {
    forward_serial(x, w, b, act, y);
  } else {
    forward_parallel(x, w, b, act, y);
  }
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy, Activation act,
                    Tensor* dx, Tensor& dw, Tensor& db, Backend backend) {
  check_dense(x, w, db);
  if (!dy.same_shape(y) || y.rows() != x.rows() || y.cols() != w.rows() || !dw.same_shape(w) ||
      (dx && !dx->same_shape(x))) {
    throw Error(ErrorCode::DimensionMismatch, "dense backward shapes are inconsistent");
  }
  if (backend == Backend::Serial) {
    backward_serial(x, w, y, dy, act, dx, dw, db);
  } else {
    backward_parallel(x, w, y, dy, act, dx, dw, db);
  }
}

}  // namespace opflab::nn
