#include "opflab/experiment.hpp"
#include "opflab/nn/kernels.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace opflab {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_test(std::span<const Sample> test) {
  if (test.empty()) throw Error(ErrorCode::EmptyTestSet, "test set is empty");
}

std::vector<double> gather(std::span<const double> v, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

LoadProfile loads_of(const Sample& s, std::size_t n) {
  const auto pd = block(s, InputBlock::Pd, n);
  const auto qd = block(s, InputBlock::Qd, n);
  return {{pd.begin(), pd.end()}, {qd.begin(), qd.end()}};
}

template <class F>
double mean_over(std::size_t count, F f) {
  double t = 0.0;
  for (std::size_t i = 0; i < count; ++i) t += f(i);
  return t / static_cast<double>(count);
}

}  // namespace

ModelPredictions predict_test_set(const std::string& name, const OpfNet& net, const NetworkCase& grid,
                                  std::span<const Sample> test) {
  require_test(test);
  const CaseLayout layout(grid);
  ModelPredictions out;
  out.name = name;
  out.full_state = net.full_state();
  const FrozenOpfNet frozen(net);
  out.pred = frozen.predict(make_input(net, layout, test));

  // Batched timing, repeated until the measurement is long enough to trust.
  int reps = 0;
  const auto t0 = Clock::now();
  double elapsed = 0.0;
  do {
    const HeadTensors p = frozen.predict(make_input(net, layout, test));
    (void)p;
    ++reps;
    elapsed = seconds_since(t0);
  } while (elapsed < 0.2 && reps < 4000);
  out.seconds_per_sample = elapsed / (static_cast<double>(reps) * static_cast<double>(test.size()));
  return out;
}

PredictionErrorRow eval_prediction_errors(const NetworkCase& grid, const ModelPredictions& model,
                                          std::span<const Sample> test) {
  require_test(test);
  const CaseLayout layout(grid);
  const std::size_t n = layout.dims.n;
  const std::size_t count = test.size();
  const HeadTensors& p = model.pred;
  if (p.pg.rows() != count) throw Error(ErrorCode::DimensionMismatch, "predictions do not match the test set");

  PredictionErrorRow row;
  row.model = model.name;
  row.pg = mean_over(count, [&](std::size_t i) {
    return metric_l1_pct(p.pg.row(i), gather(block(test[i], TargetBlock::Pg, n), layout.gen_buses));
  });
  row.qg = p.qg.size() == 0 ? kNaN : mean_over(count, [&](std::size_t i) {
    return metric_l1_pct(p.qg.row(i), gather(block(test[i], TargetBlock::Qg, n), layout.gen_buses));
  });
  row.v = mean_over(count, [&](std::size_t i) {
    const auto truth = block(test[i], TargetBlock::V, n);
    if (p.v.cols() == n) return metric_l1_pct(p.v.row(i), truth);
    return metric_l1_pct(p.v.row(i), gather(truth, layout.gen_buses));
  });
  row.theta = p.theta.size() == 0 ? kNaN : mean_over(count, [&](std::size_t i) {
    return metric_l1_pct(p.theta.row(i), block(test[i], TargetBlock::Theta, n));
  });
  row.pf = !model.full_state ? kNaN : mean_over(count, [&](std::size_t i) {
    const GridState truth = target_state(grid, test[i]);
    const GridState pred = predicted_state(grid, layout, p, i, test[i]);
    return metric_l1_pct(all_flows(pred, grid).p_f, all_flows(truth, grid).p_f);
  });
  return row;
}

RestorationInput restoration_from_model(const NetworkCase& grid, const ModelPredictions& model,
                                        std::span<const Sample> test) {
  if (!model.full_state) {
    throw Error(ErrorCode::DimensionMismatch, model.name + " does not predict a full state");
  }
  const CaseLayout layout(grid);
  RestorationInput in;
  in.name = model.name;
  for (std::size_t i = 0; i < test.size(); ++i) {
    GridState s = predicted_state(grid, layout, model.pred, i, test[i]);
    in.targets.push_back({s.p_g, s.v});
    in.warm.push_back(std::move(s));
  }
  return in;
}

RestorationInput restoration_from_dc(const NetworkCase& grid, std::span<const Sample> test) {
  const std::size_t n = grid.num_buses();
  RestorationInput in;
  in.name = "DC";
  in.targets.resize(test.size());
  in.warm.resize(test.size());
#pragma omp parallel for schedule(dynamic) num_threads(nn::thread_budget())
  for (long long k = 0; k < static_cast<long long>(test.size()); ++k) {
    const auto i = static_cast<std::size_t>(k);
    const LoadProfile loads = loads_of(test[i], n);
    const DcReport dc = solve_dc_opf(grid, loads.p_d);
    GridState warm = flat_state(grid);
    warm.theta = dc.theta;
    warm.p_g = dc.p_g;
    warm.p_d = loads.p_d;
    warm.q_d = loads.q_d;
    in.targets[i] = {dc.p_g, std::vector<double>(n, 1.0)};
    in.warm[i] = std::move(warm);
  }
  return in;
}

RestorationInput restoration_from_hot_start(const NetworkCase& grid, std::span<const Sample> test) {
  const std::size_t n = grid.num_buses();
  const auto buses = grid.generator_buses();
  RestorationInput in;
  in.name = "LF_S";
  for (const Sample& s : test) {
    if (!has_hot_start(s, n)) throw Error(ErrorCode::InvalidConfig, "LF_S needs hot-start samples");
    GridState warm;
    const auto v0 = block(s, InputBlock::VHot, n);
    const auto th0 = block(s, InputBlock::ThetaHot, n);
    warm.v.assign(v0.begin(), v0.end());
    warm.theta.assign(th0.begin(), th0.end());
    warm.p_g = split_bus_dispatch(grid, gather(block(s, InputBlock::PgHot, n), buses), false);
    warm.q_g = split_bus_dispatch(grid, gather(block(s, InputBlock::QgHot, n), buses), true);
    const LoadProfile loads = loads_of(s, n);
    warm.p_d = loads.p_d;
    warm.q_d = loads.q_d;
    in.targets.push_back({warm.p_g, warm.v});
    in.warm.push_back(std::move(warm));
  }
  return in;
}

std::size_t Restoration::failures() const {
  std::size_t f = 0;
  for (char c : converged) f += c ? 0 : 1;
  return f;
}

Restoration restore(const NetworkCase& grid, const RestorationInput& input, std::span<const Sample> test,
                    const SolverOptions& options) {
  require_test(test);
  if (input.targets.size() != test.size() || input.warm.size() != test.size()) {
    throw Error(ErrorCode::DimensionMismatch, "restoration input does not match the test set");
  }
  const std::size_t n = grid.num_buses();
  Restoration r;
  r.name = input.name;
  r.targets = input.targets;
  r.reports.resize(test.size());
  r.converged.assign(test.size(), 0);
#pragma omp parallel for schedule(dynamic) num_threads(nn::thread_budget())
  for (long long k = 0; k < static_cast<long long>(test.size()); ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      r.reports[i] = solve_load_flow(grid, loads_of(test[i], n), input.targets[i], &input.warm[i], options);
      r.converged[i] = r.reports[i].converged ? 1 : 0;
    } catch (const Error&) {
      r.converged[i] = 0;
    }
  }
  return r;
}

LoadFlowRow eval_load_flow(const NetworkCase& grid, const Restoration& r, std::span<const Sample> test) {
  require_test(test);
  LoadFlowRow row;
  row.model = r.name;
  row.failures = r.failures();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!r.converged[i]) continue;
    const GridState truth = target_state(grid, test[i]);
    const GridState& got = r.reports[i].state;
    row.left_pg += metric_l1_pct(r.targets[i].p_g, got.p_g);
    row.left_v += metric_l1_pct(r.targets[i].v, got.v);
    row.right_pg += metric_l1_pct(got.p_g, truth.p_g);
    row.right_v += metric_l1_pct(got.v, truth.v);
    ++row.rows;
  }
  if (row.rows > 0) {
    const double k = static_cast<double>(row.rows);
    row.left_pg /= k;
    row.left_v /= k;
    row.right_pg /= k;
    row.right_v /= k;
  } else {
    row.left_pg = row.left_v = row.right_pg = row.right_v = kNaN;
  }
  return row;
}

CostRow eval_cost(const NetworkCase& grid, const Restoration& r, std::span<const Sample> test) {
  require_test(test);
  CostRow row;
  row.model = r.name;
  row.failures = r.failures();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!r.converged[i]) continue;
    const double truth = dispatch_cost(target_state(grid, test[i]).p_g, grid);
    const double got = dispatch_cost(r.reports[i].state.p_g, grid);
    row.cost_pct += metric_l1_pct(std::span<const double>(&got, 1), std::span<const double>(&truth, 1));
    ++row.rows;
  }
  row.cost_pct = row.rows > 0 ? row.cost_pct / static_cast<double>(row.rows) : kNaN;
  return row;
}

RuntimeTable eval_runtime(const NetworkCase& grid, std::span<const Sample> test,
                          std::span<const ModelPredictions> models) {
  require_test(test);
  const std::size_t n = grid.num_buses();
  RuntimeTable t;
  t.samples = test.size();
  const bool hot = has_hot_start(test.front(), n);
  for (const Sample& s : test) {
    const LoadProfile loads = loads_of(s, n);

    auto t0 = Clock::now();
    (void)solve_ac_opf(grid, loads);
    t.ac += seconds_since(t0);

    t0 = Clock::now();
    (void)solve_dc_opf(grid, loads.p_d);
    t.dc += seconds_since(t0);

    if (hot) {
      t0 = Clock::now();
      const RestorationInput in = restoration_from_hot_start(grid, std::span<const Sample>(&s, 1));
      (void)solve_load_flow(grid, loads, in.targets.front(), &in.warm.front());
      t.lf_s += seconds_since(t0);
    }
  }
  const double k = static_cast<double>(test.size());
  t.ac /= k;
  t.dc /= k;
  t.lf_s = hot ? t.lf_s / k : kNaN;
  for (const ModelPredictions& m : models) t.prediction.emplace_back(m.name, m.seconds_per_sample);
  return t;
}

}  // namespace opflab
