#include "opflab/learn.hpp"
#include "opflab/nn/adam.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace opflab {

using nn::Tensor;
using nn::Var;

namespace {

void validate(const TrainConfig& c) {
  if (!(c.alpha > 0.0) || !(c.rho > 0.0) || c.batch == 0 || c.epochs < 1) {
    throw Error(ErrorCode::InvalidConfig, "training needs alpha > 0, rho > 0, batch >= 1 and epochs >= 1");
  }
}

Tensor lambda_row(const Multipliers& m) { return Tensor(1, kNumFamilies, std::vector<double>(m.begin(), m.end())); }

// Violation degrees of the current network over a whole prepared set.
Multipliers epoch_violations(OpfNet& net, const PreparedData& data, const CaseLayout& layout,
                             const NetworkCase& grid, const ConstraintOptions& options) {
  if (!net.full_state()) return {};
  nn::Tape tape;
  const HeadVars pred = forward(net, tape, data.input);
  const Var nu = constraint_violations(tape, pred, data, layout, grid, options, true);
  return mean_violations(nu.value());
}

}  // namespace

TrainResult train(const NetworkCase& grid, std::span<const Sample> samples, const ModelVariant& variant,
                  const TrainConfig& config) {
  validate(config);
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  const CaseLayout layout(grid);
  if (variant.uses_hot_start) {
    for (const Sample& s : samples) {
      if (!has_hot_start(s, layout.dims.n)) {
        throw Error(ErrorCode::InvalidConfig, std::string(variant_name(variant.tag)) + " needs hot-start samples");
      }
    }
  }

  TrainResult out;
  out.net = build_model(variant, layout.dims, config.seed, config.model);
  OpfNet& net = out.net;
  const bool constrained = variant.uses_constraints && net.full_state();
  const PreparedData data = prepare_data(net, layout, grid, samples);

  out.lambda = initial_multipliers(variant);
  nn::Parameter lambda_param(lambda_row(out.lambda));
  nn::Adam optimizer(net.parameters(), nn::AdamConfig{.alpha = config.alpha});
  nn::Adam lambda_optimizer({&lambda_param}, nn::AdamConfig{.alpha = config.alpha}, config.cs_l_ascent);

  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_lo = 0.0;
    double sum_lc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      const PreparedData batch =
          select_rows(data, std::span<const std::size_t>(order).subspan(start, stop - start));

      nn::Tape tape;
      const HeadVars pred = forward(net, tape, batch.input);
      const Var lo = loss_objective(tape, pred, batch.target);
      Var total = lo;
      double lc_value = 0.0;
      if (constrained) {
        const Var nu = constraint_violations(tape, pred, batch, layout, grid, config.constraints, true);
        const Var lam = variant.trainable_lambda ? tape.parameter(lambda_param) : tape.constant(lambda_row(out.lambda));
        const Var lc = loss_constraints(nu, lam);
        lc_value = lc.value()(0, 0);
        total = nn::add(lo, lc);
      }
      const double lo_value = lo.value()(0, 0);
      if (!std::isfinite(lo_value) || !std::isfinite(lc_value)) {
        throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch), out.history);
      }
      optimizer.zero_grad();
      lambda_optimizer.zero_grad();
      tape.backward(total);
      optimizer.step();
      if (constrained && variant.trainable_lambda) {
        lambda_optimizer.step();
        for (double& x : lambda_param.value.values()) x = std::max(0.0, x);
        std::copy(lambda_param.value.values().begin(), lambda_param.value.values().end(), out.lambda.begin());
      }
      sum_lo += lo_value;
      sum_lc += lc_value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_objective = sum_lo / static_cast<double>(batches);
    rec.loss_constraints = sum_lc / static_cast<double>(batches);
    rec.nu_mean = epoch_violations(net, data, layout, grid, config.constraints);
    if (constrained && variant.dual_update) {
      for (std::size_t c = 0; c < kNumFamilies; ++c) out.lambda[c] += config.rho * rec.nu_mean[c];
    }
    rec.lambda = out.lambda;
    out.history.push_back(rec);
    spdlog::debug("{} epoch {}: L_o {:.3e} L_c {:.3e}", variant_name(variant.tag), epoch, rec.loss_objective,
                  rec.loss_constraints);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::filesystem::path meta_path(const std::filesystem::path& p) { return p.string() + ".meta"; }

}  // namespace

void save_model(const TrainResult& model, const TrainConfig& config, const std::filesystem::path& path) {
  nn::save_checkpoint(model.net.layer_list(), path);
  std::ofstream meta(meta_path(path));
  if (!meta) throw Error(ErrorCode::IoFailure, "cannot write " + meta_path(path).string());
  const CaseDims& d = model.net.dims();
  meta << "variant=" << variant_name(model.net.variant().tag) << "\n";
  meta << "n=" << d.n << "\nl=" << d.l << "\ng=" << d.g << "\ne=" << d.e << "\n";
  meta << "four_head_baseline=" << (model.net.options().four_head_baseline ? 1 : 0) << "\n";
  meta << "lambda=";
  for (std::size_t c = 0; c < kNumFamilies; ++c) meta << (c ? " " : "") << number(model.lambda[c]);
  meta << "\nalpha=" << number(config.alpha) << "\nrho=" << number(config.rho) << "\nbatch=" << config.batch
       << "\nepochs=" << config.epochs << "\nseed=" << config.seed << "\n";
  if (!meta) throw Error(ErrorCode::IoFailure, "cannot write " + meta_path(path).string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream meta(meta_path(path));
  if (!meta) throw Error(ErrorCode::IoFailure, "cannot read " + meta_path(path).string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::IoFailure, "model sidecar lacks '" + key + "'");
    return it->second;
  };
  CaseDims dims{std::stoul(get("n")), std::stoul(get("l")), std::stoul(get("g")), std::stoul(get("e"))};
  ModelOptions opts;
  opts.four_head_baseline = get("four_head_baseline") == "1";

  LoadedModel out;
  out.net = OpfNet(parse_variant(get("variant")), dims, opts);
  std::istringstream lam(get("lambda"));
  for (double& x : out.lambda) {
    if (!(lam >> x)) throw Error(ErrorCode::IoFailure, "model sidecar has a bad lambda line");
  }

  std::vector<nn::DenseLayer> layers = nn::load_checkpoint(path);
  std::vector<nn::DenseLayer*> slots;
  for (nn::DenseLayer& l : out.net.trunk().layers()) slots.push_back(&l);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    for (nn::DenseLayer& l : out.net.head(static_cast<Head>(h)).layers()) slots.push_back(&l);
  }
  if (layers.size() != slots.size()) {
    throw Error(ErrorCode::DimensionMismatch, "checkpoint layer count does not match the variant");
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (layers[k].in() != slots[k]->in() || layers[k].out() != slots[k]->out() || layers[k].act != slots[k]->act) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint layer " + std::to_string(k) + " does not match the variant");
    }
    *slots[k] = std::move(layers[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predicted states
// ---------------------------------------------------------------------------

std::vector<double> split_bus_dispatch(const NetworkCase& grid, std::span<const double> per_bus, bool reactive) {
  const auto buses = grid.generator_buses();
  if (per_bus.size() != buses.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dispatch needs one value per generator bus");
  }
  const auto at_bus = grid.generators_at_bus();
  std::vector<double> out(grid.generators.size(), 0.0);
  for (std::size_t k = 0; k < buses.size(); ++k) {
    const auto& gens = at_bus[buses[k]];
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t gi : gens) {
      lo += reactive ? grid.generators[gi].q_min : grid.generators[gi].p_min;
      hi += reactive ? grid.generators[gi].q_max : grid.generators[gi].p_max;
    }
    if (gens.size() == 1 || !(hi > lo)) {
      for (std::size_t gi : gens) out[gi] = per_bus[k] / static_cast<double>(gens.size());
      continue;
    }
    const double t = (per_bus[k] - lo) / (hi - lo);
    for (std::size_t gi : gens) {
      const double a = reactive ? grid.generators[gi].q_min : grid.generators[gi].p_min;
      const double b = reactive ? grid.generators[gi].q_max : grid.generators[gi].p_max;
      out[gi] = a + t * (b - a);
    }
  }
  return out;
}

GridState predicted_state(const NetworkCase& grid, const CaseLayout& layout, const HeadTensors& pred,
                          std::size_t r, const Sample& sample) {
  const std::size_t n = layout.dims.n;
  if (pred.v.cols() != n || pred.theta.cols() != n || pred.qg.size() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "a grid state needs a full-state prediction");
  }
  GridState s;
  s.v.assign(pred.v.row(r).begin(), pred.v.row(r).end());
  s.theta.assign(pred.theta.row(r).begin(), pred.theta.row(r).end());
  s.p_g = split_bus_dispatch(grid, pred.pg.row(r), false);
  s.q_g = split_bus_dispatch(grid, pred.qg.row(r), true);
  const auto pd = block(sample, InputBlock::Pd, n);
  const auto qd = block(sample, InputBlock::Qd, n);
  s.p_d.assign(pd.begin(), pd.end());
  s.q_d.assign(qd.begin(), qd.end());
  return s;
}

}  // namespace opflab
