#include "doctest.h"
#include "gradcheck.hpp"
#include "test_support.hpp"

#include "opflab/error.hpp"
#include "opflab/nn/adam.hpp"
#include "opflab/nn/layers.hpp"

#include <cmath>
#include <sstream>

using namespace opflab;
using namespace opflab::nn;
using opflab::testing::Gen;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Gen& gen, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.values()) v = gen.uniform(lo, hi);
  return t;
}

// y[r][o] = act(b[o] + sum_i W[o][i] x[r][i]) evaluated independently.
Tensor naive_dense(const Tensor& x, const DenseLayer& l) {
  Tensor y(x.rows(), l.out());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t o = 0; o < l.out(); ++o) {
      long double s = l.b.value(0, o);
      for (std::size_t i = 0; i < l.in(); ++i) s += static_cast<long double>(l.w.value(o, i)) * x(r, i);
      y(r, o) = l.act == Activation::Relu ? std::max<double>(0.0, static_cast<double>(s)) : static_cast<double>(s);
    }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("dense forward examples") {
  DenseLayer l(2, 2, Activation::Relu);
  l.w.value = Tensor(2, 2, {1, 0, 0, 1});
  for (Backend be : {Backend::Serial, Backend::Parallel}) {
    const Tensor pos = dense_forward(Tensor(1, 2, {0.5, 2.0}), l, be);
    CHECK(pos == Tensor(1, 2, {0.5, 2.0}));
    const Tensor clamp = dense_forward(Tensor(1, 2, {-1.0, 2.0}), l, be);
    CHECK(clamp == Tensor(1, 2, {0.0, 2.0}));
  }
  CHECK_THROWS_AS(dense_forward(Tensor(1, 3), l), Error);
}

TEST_CASE("dense forward matches the naive oracle on both backends") {
  Gen gen(1);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = static_cast<std::size_t>(gen.integer(1, 90));
    const std::size_t out = static_cast<std::size_t>(gen.integer(1, 90));
    const std::size_t rows = static_cast<std::size_t>(gen.integer(1, 100));
    DenseLayer l(in, out, trial % 2 ? Activation::Relu : Activation::Identity);
    l.initialize(rng);
    const Tensor x = random_tensor(rows, in, gen);
    const Tensor want = naive_dense(x, l);
    CHECK(max_abs_diff(dense_forward(x, l, Backend::Serial), want) <= 1e-12);
    CHECK(max_abs_diff(dense_forward(x, l, Backend::Parallel), want) <= 1e-12);
  }
}

TEST_CASE("parallel backward matches serial and ignores the thread count") {
  Gen gen(3);
  std::mt19937_64 rng(4);
  DenseLayer l(37, 70, Activation::Relu);
  l.initialize(rng);
  const Tensor x = random_tensor(150, 37, gen);
  const Tensor y = dense_forward(x, l, Backend::Serial);
  const Tensor dy = random_tensor(150, 70, gen);

  auto run = [&](Backend be) {
    Tensor dx(150, 37), dw(70, 37), db(1, 70);
    dense_backward(x, l.w.value, y, dy, l.act, &dx, dw, db, be);
    return std::array<Tensor, 3>{dx, dw, db};
  };
  const auto s = run(Backend::Serial);
  set_thread_budget(1);
  const auto p1 = run(Backend::Parallel);
  set_thread_budget(4);
  const auto p4 = run(Backend::Parallel);
  const Tensor f4 = dense_forward(x, l, Backend::Parallel);
  set_thread_budget(1);
  const Tensor f1 = dense_forward(x, l, Backend::Parallel);
  set_thread_budget(0);
  for (int k = 0; k < 3; ++k) {
    CHECK(max_abs_diff(s[k], p1[k]) <= 1e-11);
    CHECK(p1[k] == p4[k]);
  }
  CHECK(f1 == f4);
}

TEST_CASE("ReLU layer without bias is positively homogeneous") {
  Gen gen(5);
  std::mt19937_64 rng(6);
  DenseLayer l(8, 6, Activation::Relu);
  l.initialize(rng);
  l.b.value.fill(0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(3, 8, gen);
    const double t = gen.uniform(0.01, 10.0);
    Tensor tx = x;
    for (double& v : tx.values()) v *= t;
    Tensor fx = dense_forward(x, l);
    for (double& v : fx.values()) v *= t;
    CHECK(max_abs_diff(dense_forward(tx, l), fx) <= 1e-12 * std::max(1.0, t));
  }
}

TEST_CASE("backward basics") {
  SUBCASE("squared norm of a leaf") {
    Parameter x(Tensor(2, 3, {1, -2, 3, 0.5, 0, -1}));
    Tape tape;
    Var v = tape.parameter(x);
    tape.backward(sum(square(v)));
    for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad.values()[i] == 2.0 * x.value.values()[i]);
  }
  SUBCASE("inactive hinge passes no gradient") {
    Parameter s(Tensor(1, 3, {-0.5, -1e-9, 2.0}));
    Tape tape;
    tape.backward(sum(hinge(tape.parameter(s))));
    CHECK(s.grad(0, 0) == 0.0);
    CHECK(s.grad(0, 1) == 0.0);
    CHECK(s.grad(0, 2) == 1.0);
  }
  SUBCASE("kinks at zero have zero derivative") {
    Parameter s(Tensor(1, 2, {0.0, 0.0}));
    Tape tape;
    Var v = tape.parameter(s);
    tape.backward(sum(add(relu(v), abs(v))));
    CHECK(s.grad(0, 0) == 0.0);
  }
  SUBCASE("tape misuse") {
    Tape a, b;
    Parameter p(Tensor(1, 1, {2.0}));
    Var lb = sum(b.parameter(p));
    try {
      a.backward(lb);
      FAIL("expected TapeNotRecorded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TapeNotRecorded);
    }
    b.backward(lb);
    CHECK_THROWS_AS(b.backward(lb), Error);
    b.clear();
    CHECK_THROWS_AS(b.backward(lb), Error);
    Parameter big(Tensor(2, 2));
    Tape c;
    CHECK_THROWS_AS(c.backward(c.parameter(big)), Error);
  }
}

TEST_CASE("three-layer network gradients match finite differences") {
  std::mt19937_64 rng(8);
  Gen gen(9);
  for (Backend be : {Backend::Serial, Backend::Parallel}) {
    Mlp net({7, 12, 9, 4});
    net.initialize(rng);
    const Tensor x = random_tensor(5, 7, gen);
    const Tensor target = random_tensor(5, 4, gen);
    std::vector<Parameter*> params;
    net.collect(params);
    const auto res = opflab::testing::grad_check(
        params,
        [&](Tape& t) {
          Var out = net.forward(t, t.constant(x));
          return batch_mean(row_sum(square(sub(out, t.constant(target)))));
        },
        1000, 10, 1e-5, be);
    CHECK(res.checked == net.num_parameters());
    CHECK(res.worst_relative <= 1e-4);
  }
}

TEST_CASE("every op differentiates correctly") {
  Gen gen(12);
  Parameter a(random_tensor(4, 5, gen, 0.2, 1.0));
  Parameter row(random_tensor(1, 5, gen));
  Parameter scalar(Tensor(1, 1, {0.7}));
  Parameter other(random_tensor(4, 3, gen));
  const std::vector<Parameter*> params = {&a, &row, &scalar, &other};
  const auto res = opflab::testing::grad_check(
      params,
      [&](Tape& t) {
        Var va = t.parameter(a), vr = t.parameter(row), vs = t.parameter(scalar), vo = t.parameter(other);
        Var m = mul(sin(va), vr);
        Var n = sub(cos(va), mul(va, vs));
        Var p = add(scale(square(m), 0.5), add_scalar(abs(n), 0.1));
        Var g = gather_cols(p, {4, 0, 0, 2});
        Var s = scatter_add_cols(concat_cols({g, vo}), {1, 1, 0, 2, 3, 4, 2}, 5);
        Var h = hinge(add(s, vr));
        return add(batch_mean(row_sum(h)), sum(mul(row_sum(vo), row_sum(g))));
      },
      100, 13);
  CHECK(res.worst_relative <= 1e-6);
}

TEST_CASE("broadcast shape errors") {
  Tape t;
  Var a = t.constant(Tensor(3, 2));
  CHECK_THROWS_AS(add(a, t.constant(Tensor(2, 2))), Error);
  CHECK_THROWS_AS(gather_cols(a, {2}), Error);
  CHECK_THROWS_AS(scatter_add_cols(a, {0}, 3), Error);
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> w = {1.0, -2.0}, g = {0.0, 0.0}, m = {0.0, 0.0}, v = {0.0, 0.0};
    for (int t = 1; t <= 5; ++t) adam_step(w, g, m, v, t, {});
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
  }
  SUBCASE("first step has magnitude alpha") {
    std::vector<double> w = {0.0}, g = {1.0}, m = {0.0}, v = {0.0};
    adam_step(w, g, m, v, 1, {});
    CHECK(w[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("descent on w^2") {
    Parameter w(Tensor(1, 1, {1.0}));
    Adam opt({&w});
    std::vector<double> path;
    for (int step = 0; step < 100; ++step) {
      opt.zero_grad();
      w.grad(0, 0) = 2.0 * w.value(0, 0);
      opt.step();
      path.push_back(std::abs(w.value(0, 0)));
    }
    for (std::size_t k = 3; k < path.size(); ++k) CHECK(path[k] < path[k - 1]);
  }
  SUBCASE("ascent moves uphill") {
    Parameter w(Tensor(1, 1, {1.0}));
    Adam opt({&w}, {}, true);
    w.grad(0, 0) = 1.0;
    opt.step();
    CHECK(w.value(0, 0) > 1.0);
  }
  SUBCASE("size mismatch") {
    std::vector<double> w = {0.0}, g = {1.0, 2.0}, m = {0.0}, v = {0.0};
    CHECK_THROWS_AS(adam_step(w, g, m, v, 1, {}), Error);
  }
}

TEST_CASE("initialization is seeded and bounded") {
  Mlp a({10, 20, 3}), b({10, 20, 3});
  std::mt19937_64 r1(77), r2(77);
  a.initialize(r1);
  b.initialize(r2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.layers()[k].w.value == b.layers()[k].w.value);
    CHECK(a.layers()[k].b.value == b.layers()[k].b.value);
  }
  for (double v : a.layers()[0].w.value.values()) CHECK(std::abs(v) <= std::sqrt(1.0 / 10.0));
  for (double v : a.layers()[1].w.value.values()) CHECK(std::abs(v) <= std::sqrt(1.0 / 20.0));
  CHECK(a.layers()[0].act == Activation::Relu);
  CHECK(a.layers()[1].act == Activation::Identity);
}

TEST_CASE("checkpoint round trip is lossless") {
  Mlp net({6, 11, 5, 2});
  std::mt19937_64 rng(21);
  net.initialize(rng);
  net.layers()[1].w.value(0, 0) = 1.0 / 3.0;
  net.layers()[1].b.value(0, 1) = -1e-300;
  std::vector<const DenseLayer*> layers;
  for (const DenseLayer& l : net.layers()) layers.push_back(&l);
  const auto path = opflab::testing::scratch_dir("nn") / "net.opfnn";
  save_checkpoint(layers, path);
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].w.value == net.layers()[k].w.value);
    CHECK(back[k].b.value == net.layers()[k].b.value);
    CHECK(back[k].act == net.layers()[k].act);
  }
  std::istringstream bad("#opfnn v1 layers=1\nlayer 2 2 relu\n1 2\n");
  CHECK_THROWS_AS(read_layers(bad), Error);
}
