#include "opflab/experiment.hpp"
#include "opflab/nn/kernels.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace opflab {

namespace {

constexpr int kDrawsPerSample = 10;

LoadProfile draw_loads(const NetworkCase& net, std::uint64_t seed, std::size_t slot, int draw) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(slot >> 32),
                    static_cast<std::uint32_t>(draw)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.8, 1.2);
  LoadProfile loads = nominal_loads(net);
  for (double& p : loads.p_d) p *= u(rng);
  for (double& q : loads.q_d) q *= u(rng);
  return loads;
}

void aggregate(const NetworkCase& net, const std::vector<double>& per_gen, std::span<double> per_bus) {
  std::fill(per_bus.begin(), per_bus.end(), 0.0);
  for (std::size_t k = 0; k < net.generators.size(); ++k) per_bus[net.generators[k].bus] += per_gen[k];
}

double total_load(const Sample& s, std::size_t n) {
  double t = 0.0;
  for (double p : block(s, InputBlock::Pd, n)) t += std::abs(p);
  return t;
}

}  // namespace

Sample make_sample(const NetworkCase& net, const GridState& solution) {
  check_dims(solution, net);
  const std::size_t n = net.num_buses();
  Sample s;
  s.x.assign(8 * n, 0.0);
  s.y.assign(4 * n, 0.0);
  std::copy(solution.p_d.begin(), solution.p_d.end(), block(s, InputBlock::Pd, n).begin());
  std::copy(solution.q_d.begin(), solution.q_d.end(), block(s, InputBlock::Qd, n).begin());
  aggregate(net, solution.p_g, block(s, TargetBlock::Pg, n));
  aggregate(net, solution.q_g, block(s, TargetBlock::Qg, n));
  std::copy(solution.v.begin(), solution.v.end(), block(s, TargetBlock::V, n).begin());
  std::copy(solution.theta.begin(), solution.theta.end(), block(s, TargetBlock::Theta, n).begin());
  return s;
}

GridState target_state(const NetworkCase& net, const Sample& sample) {
  const std::size_t n = net.num_buses();
  if (sample.x.size() != 8 * n || sample.y.size() != 4 * n) {
    throw Error(ErrorCode::DimensionMismatch, "sample is not dimensioned to the case");
  }
  const auto buses = net.generator_buses();
  std::vector<double> pg, qg;
  for (std::size_t b : buses) {
    pg.push_back(block(sample, TargetBlock::Pg, n)[b]);
    qg.push_back(block(sample, TargetBlock::Qg, n)[b]);
  }
  GridState s;
  const auto v = block(sample, TargetBlock::V, n);
  const auto th = block(sample, TargetBlock::Theta, n);
  const auto pd = block(sample, InputBlock::Pd, n);
  const auto qd = block(sample, InputBlock::Qd, n);
  s.v.assign(v.begin(), v.end());
  s.theta.assign(th.begin(), th.end());
  s.p_g = split_bus_dispatch(net, pg, false);
  s.q_g = split_bus_dispatch(net, qg, true);
  s.p_d.assign(pd.begin(), pd.end());
  s.q_d.assign(qd.begin(), qd.end());
  return s;
}

bool verify_sample(const NetworkCase& net, const Sample& sample, double tol) {
  const GridState s = target_state(net, sample);
  const FlowSet flows = all_flows(s, net);
  if (kcl_residual(s, flows, net).max_abs() > tol) return false;
  const SatisfiabilityDegrees sigma = satisfiability_degrees(s, flows, nullptr, net, {}, false);
  for (const auto* v : {&sigma.v_lo, &sigma.v_hi, &sigma.angle_lo, &sigma.angle_hi, &sigma.p_lo, &sigma.p_hi,
                        &sigma.q_lo, &sigma.q_hi, &sigma.flow_limit}) {
    for (double x : *v) {
      if (!(x <= tol)) return false;
    }
  }
  return violation_degrees(sigma, net).feasible(tol);
}

Dataset gen_dataset(const NetworkCase& net, std::size_t count, std::uint64_t seed, GenStats* stats,
                    const SolverOptions& options) {
  if (count == 0) throw Error(ErrorCode::InvalidConfig, "dataset size must be at least 1");
  Dataset out;
  out.dims = net.dims();
  out.samples.resize(count);
  std::vector<int> draws(count, 0);
  std::vector<char> ok(count, 0);

  const long long total = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 4) num_threads(nn::thread_budget())
  for (long long i = 0; i < total; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    for (int d = 0; d < kDrawsPerSample && !ok[slot]; ++d) {
      draws[slot] = d + 1;
      const LoadProfile loads = draw_loads(net, seed, slot, d);
      try {
        const SolveReport r = solve_ac_opf(net, loads, nullptr, options);
        if (!r.converged) continue;
        Sample s = make_sample(net, r.state);
        if (!verify_sample(net, s)) continue;
        out.samples[slot] = std::move(s);
        ok[slot] = 1;
      } catch (const Error&) {
        // Screened-infeasible draw; redraw.
      }
    }
  }

  GenStats st;
  st.attempts = static_cast<std::size_t>(std::accumulate(draws.begin(), draws.end(), 0LL));
  st.resampled = st.attempts - static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  if (stats) *stats = st;
  if (std::count(ok.begin(), ok.end(), 0) > 0) {
    throw Error(ErrorCode::CaseInfeasible, "resample budget exhausted after " + std::to_string(st.attempts) +
                                               " draws for " + std::to_string(count) + " samples");
  }
  if (st.resampled > 0) spdlog::info("{}: {} of {} draws redrawn", net.name, st.resampled, st.attempts);
  return out;
}

Dataset pair_hot_start(const Dataset& data, double delta_pct, PairStats* stats) {
  const std::size_t n = data.dims.n;
  const std::size_t count = data.samples.size();
  std::vector<double> totals(count);
  for (std::size_t i = 0; i < count; ++i) totals[i] = total_load(data.samples[i], n);

  Dataset out;
  out.dims = data.dims;
  out.delta_pct = delta_pct;
  PairStats st;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t best = count;
    double best_gap = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      if (j == i) continue;
      const double gap = std::abs(totals[j] - totals[i]);
      if (best == count || gap < best_gap) {
        best = j;
        best_gap = gap;
      }
    }
    if (best == count || totals[i] <= 0.0 || best_gap / totals[i] * 100.0 > delta_pct) {
      ++st.dropped;
      continue;
    }
    Sample s = data.samples[i];
    const Sample& p = data.samples[best];
    auto put = [&](InputBlock dst, std::span<const double> src) {
      std::copy(src.begin(), src.end(), block(s, dst, n).begin());
    };
    put(InputBlock::PdHot, block(p, InputBlock::Pd, n));
    put(InputBlock::QdHot, block(p, InputBlock::Qd, n));
    put(InputBlock::PgHot, block(p, TargetBlock::Pg, n));
    put(InputBlock::QgHot, block(p, TargetBlock::Qg, n));
    put(InputBlock::VHot, block(p, TargetBlock::V, n));
    put(InputBlock::ThetaHot, block(p, TargetBlock::Theta, n));
    out.samples.push_back(std::move(s));
    ++st.kept;
  }
  if (stats) *stats = st;
  if (out.samples.empty()) {
    throw Error(ErrorCode::NoPairs, "no sample has a partner within " + std::to_string(delta_pct) + "%");
  }
  if (st.dropped > 0) spdlog::info("pairing at {}%: {} samples dropped", delta_pct, st.dropped);
  return out;
}

double metric_l1_pct(std::span<const double> xhat, std::span<const double> x) {
  if (xhat.size() != x.size()) throw Error(ErrorCode::DimensionMismatch, "metric operands differ in length");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += std::abs(xhat[i] - x[i]);
    den += std::abs(x[i]);
  }
  if (den == 0.0) throw Error(ErrorCode::ZeroReference, "reference vector has zero L1 norm");
  return num / den * 100.0;
}

Split split_dataset(const std::vector<Sample>& samples, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train ratio must lie in (0, 1]");
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(samples.size())));
  Split s;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? s.train : s.test).push_back(samples[idx[k]]);
  return s;
}

}  // namespace opflab
