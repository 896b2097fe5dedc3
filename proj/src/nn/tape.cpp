#include "opflab/nn/tape.hpp"

#include "opflab/error.hpp"

#include <cmath>
#include <string>

namespace opflab::nn {

const Tensor& Var::value() const { return tape->node(id).value; }

Var Tape::record(Tensor value, bool needs_grad, std::function<void(Tape&, std::size_t)> back) {
  nodes_.push_back({std::move(value), Tensor{}, needs_grad, nullptr, std::move(back)});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = record(p.value, true, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this || loss.id >= nodes_.size() || backward_done_) {
    throw Error(ErrorCode::TapeNotRecorded, "backward() needs a loss recorded on this tape since the last clear()");
  }
  if (nodes_[loss.id].value.rows() != 1 || nodes_[loss.id].value.cols() != 1) {
    throw Error(ErrorCode::DimensionMismatch, "backward() needs a 1x1 loss");
  }
  grad_buffer(loss.id)(0, 0) = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad.same_shape(n.value)) continue;
    if (n.back) n.back(*this, id);
    if (n.param) {
      if (!n.param->grad.same_shape(n.param->value)) n.param->grad = Tensor(n.value.rows(), n.value.cols());
      auto pg = n.param->grad.map();
      pg += n.grad.map();
    }
  }
  backward_done_ = true;
}

const Tensor& Tape::grad(Var v) const {
  if (v.tape != this || v.id >= nodes_.size() || !backward_done_) {
    throw Error(ErrorCode::TapeNotRecorded, "no adjoint recorded for this node");
  }
  return nodes_[v.id].grad;
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape == nullptr || v.tape != t) {
      throw Error(ErrorCode::TapeNotRecorded, "operands belong to different tapes");
    }
  }
  return *t;
}

bool needs(const Var& v) { return v.tape->node(v.id).needs_grad; }

enum class Bcast { Same, Row, Scalar };

Bcast classify(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
  throw Error(ErrorCode::DimensionMismatch, "cannot broadcast " + std::to_string(b.rows()) + "x" +
                                                std::to_string(b.cols()) + " against " +
                                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
}

double at(const Tensor& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::Same: return b(r, c);
    case Bcast::Row: return b(0, c);
    case Bcast::Scalar: return b(0, 0);
  }
  return 0.0;
}

double& at(Tensor& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::Same: return b(r, c);
    case Bcast::Row: return b(0, c);
    case Bcast::Scalar: break;
  }
  return b(0, 0);
}

template <class Fwd, class Back>
Var binary(Var a, Var b, Fwd fwd, Back back_a_b) {
  Tape& t = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast k = classify(av, bv);
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = fwd(av(r, c), at(bv, k, r, c));
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), needs(a) || needs(b), [ia, ib, k, back_a_b](Tape& tp, std::size_t id) {
    const Tensor& g = tp.node(id).grad;
    const bool na = tp.node(ia).needs_grad, nb = tp.node(ib).needs_grad;
    Tensor* ga = na ? &tp.grad_buffer(ia) : nullptr;
    Tensor* gb = nb ? &tp.grad_buffer(ib) : nullptr;
    const Tensor& av = tp.node(ia).value;
    const Tensor& bv = tp.node(ib).value;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        double da = 0.0, db = 0.0;
        back_a_b(av(r, c), at(bv, k, r, c), g(r, c), da, db);
        if (ga) (*ga)(r, c) += da;
        if (gb) at(*gb, k, r, c) += db;
      }
    }
  });
}

// df(x, y) gives dy/dx from the input x and output y.
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Tape& t = tape_of({a});
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out.values()[i] = f(av.values()[i]);
  const std::size_t ia = a.id;
  return t.record(std::move(out), needs(a), [ia, df](Tape& tp, std::size_t id) {
    const auto& n = tp.node(id);
    const Tensor& av = tp.node(ia).value;
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < av.size(); ++i) ga.values()[i] += n.grad.values()[i] * df(av.values()[i], n.value.values()[i]);
  });
}

}  // namespace

Var dense(Var x, Var w, Var b, Activation act) {
  Tape& t = tape_of({x, w, b});
  Tensor y;
  dense_forward(x.value(), w.value(), b.value(), act, y, t.backend());
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return t.record(std::move(y), needs(x) || needs(w) || needs(b), [ix, iw, ib, act](Tape& tp, std::size_t id) {
    Tensor* dx = tp.node(ix).needs_grad ? &tp.grad_buffer(ix) : nullptr;
    Tensor& dw = tp.grad_buffer(iw);
    Tensor& db = tp.grad_buffer(ib);
    dense_backward(tp.node(ix).value, tp.node(iw).value, tp.node(id).value, tp.node(id).grad, act, dx, dw, db,
                   tp.backend());
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var hinge(Var a) { return relu(a); }

Var add(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x + y; },
                [](double, double, double g, double& da, double& db) {
                  da = g;
                  db = g;
                });
}

Var sub(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x - y; },
                [](double, double, double g, double& da, double& db) {
                  da = g;
                  db = -g;
                });
}

Var mul(Var a, Var b) {
  return binary(a, b, [](double x, double y) { return x * y; },
                [](double x, double y, double g, double& da, double& db) {
                  da = g * y;
                  db = g * x;
                });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::DimensionMismatch, "concat of nothing");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool any = false;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    tape_of({parts.front(), p});
    if (p.rows() != rows) throw Error(ErrorCode::DimensionMismatch, "concat operands differ in rows");
    cols += p.cols();
    any = any || needs(p);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    off += v.cols();
  }
  return t.record(std::move(out), any, [ids, widths](Tape& tp, std::size_t id) {
    const Tensor& g = tp.node(id).grad;
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.node(ids[k]).needs_grad) {
        Tensor& gk = tp.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gk(r, c) += g(r, off + c);
      }
      off += widths[k];
    }
  });
}

Var gather_cols(Var a, std::vector<std::size_t> index) {
  Tape& t = tape_of({a});
  const Tensor& av = a.value();
  for (std::size_t i : index) {
    if (i >= av.cols()) throw Error(ErrorCode::DimensionMismatch, "gather index out of range");
  }
  Tensor out(av.rows(), index.size());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < index.size(); ++k) out(r, k) = av(r, index[k]);
  const std::size_t ia = a.id;
  return t.record(std::move(out), needs(a), [ia, index = std::move(index)](Tape& tp, std::size_t id) {
    const Tensor& g = tp.node(id).grad;
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t k = 0; k < index.size(); ++k) ga(r, index[k]) += g(r, k);
  });
}

Var scatter_add_cols(Var a, std::vector<std::size_t> index, std::size_t cols) {
  Tape& t = tape_of({a});
  const Tensor& av = a.value();
  if (index.size() != av.cols()) throw Error(ErrorCode::DimensionMismatch, "scatter index length mismatch");
  for (std::size_t i : index) {
    if (i >= cols) throw Error(ErrorCode::DimensionMismatch, "scatter index out of range");
  }
  Tensor out(av.rows(), cols);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < index.size(); ++k) out(r, index[k]) += av(r, k);
  const std::size_t ia = a.id;
  return t.record(std::move(out), needs(a), [ia, index = std::move(index)](Tape& tp, std::size_t id) {
    const Tensor& g = tp.node(id).grad;
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t k = 0; k < index.size(); ++k) ga(r, k) += g(r, index[k]);
  });
}

Var row_sum(Var a) {
  Tape& t = tape_of({a});
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out(r, 0) = s;
  }
  const std::size_t ia = a.id;
  return t.record(std::move(out), needs(a), [ia](Tape& tp, std::size_t id) {
    const Tensor& g = tp.node(id).grad;
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, 0);
  });
}

namespace {

Var scaled_sum(Var a, double factor) {
  Tape& t = tape_of({a});
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return t.record(Tensor(1, 1, s * factor), needs(a), [ia, factor](Tape& tp, std::size_t id) {
    const double g = tp.node(id).grad(0, 0) * factor;
    for (double& v : tp.grad_buffer(ia).values()) v += g;
  });
}

}  // namespace

Var sum(Var a) { return scaled_sum(a, 1.0); }

Var batch_mean(Var a) {
  if (a.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "mean over an empty batch");
  return scaled_sum(a, 1.0 / static_cast<double>(a.rows()));
}

}  // namespace opflab::nn
