// Serial reference vs OpenMP kernels for the dense layer, plus whole-network
// inference in double and single precision at case14 sizes.

#include "opflab/learn.hpp"
#include "opflab/nn/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace opflab;
using nn::Backend;
using nn::Tensor;

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Widest layer of the hot-start heads at case14: 102 -> 204.
constexpr std::size_t kIn = 102;
constexpr std::size_t kOut = 204;

void dense_forward_bench(benchmark::State& state, Backend backend) {
  std::mt19937_64 rng(1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor(batch, kIn, rng);
  const Tensor w = random_tensor(kOut, kIn, rng);
  const Tensor b = random_tensor(1, kOut, rng);
  Tensor y;
  for (auto _ : state) {
    nn::dense_forward(x, w, b, nn::Activation::Relu, y, backend);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

void dense_backward_bench(benchmark::State& state, Backend backend) {
  std::mt19937_64 rng(2);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor(batch, kIn, rng);
  const Tensor w = random_tensor(kOut, kIn, rng);
  const Tensor b = random_tensor(1, kOut, rng);
  const Tensor dy = random_tensor(batch, kOut, rng);
  Tensor y;
  nn::dense_forward(x, w, b, nn::Activation::Relu, y, backend);
  Tensor dx(batch, kIn), dw(kOut, kIn), db(1, kOut);
  for (auto _ : state) {
    nn::dense_backward(x, w, y, dy, nn::Activation::Relu, &dx, dw, db, backend);
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

ModelInput case14_input(const OpfNet& net, std::size_t batch) {
  std::mt19937_64 rng(3);
  const CaseDims& d = net.dims();
  ModelInput in;
  in.loads = random_tensor(batch, net.load_width(), rng);
  in.v0 = random_tensor(batch, d.n, rng);
  in.theta0 = random_tensor(batch, d.n, rng);
  in.pg0 = random_tensor(batch, d.g, rng);
  in.qg0 = random_tensor(batch, d.g, rng);
  return in;
}

const CaseDims kCase14{14, 11, 5, 40};

void predict_double_bench(benchmark::State& state, Backend backend) {
  const OpfNet net = build_model(parse_variant("MCSD"), kCase14, 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const ModelInput in = case14_input(net, batch);
  for (auto _ : state) {
    HeadTensors p = predict(net, in, backend);
    benchmark::DoNotOptimize(p.pg.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

void predict_float_bench(benchmark::State& state) {
  const OpfNet net = build_model(parse_variant("MCSD"), kCase14, 1);
  const FrozenOpfNet frozen(net);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const ModelInput in = case14_input(net, batch);
  for (auto _ : state) {
    HeadTensors p = frozen.predict(in);
    benchmark::DoNotOptimize(p.pg.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

}  // namespace

BENCHMARK_CAPTURE(dense_forward_bench, serial, Backend::Serial)->Arg(64)->Arg(400);
BENCHMARK_CAPTURE(dense_forward_bench, parallel, Backend::Parallel)->Arg(64)->Arg(400);
BENCHMARK_CAPTURE(dense_backward_bench, serial, Backend::Serial)->Arg(64)->Arg(400);
BENCHMARK_CAPTURE(dense_backward_bench, parallel, Backend::Parallel)->Arg(64)->Arg(400);
BENCHMARK_CAPTURE(predict_double_bench, serial, Backend::Serial)->Arg(400);
BENCHMARK_CAPTURE(predict_double_bench, parallel, Backend::Parallel)->Arg(400);
BENCHMARK(predict_float_bench)->Arg(400);

BENCHMARK_MAIN();
