// Command-line driver for dataset generation, pairing, training and the
// evaluation tables.

#include "opflab/experiment.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

namespace {

using namespace opflab;

struct Flags {
  std::string case_path;
  std::size_t n = 2000;
  double delta = 1.0;
  std::string variant = "all";
  std::uint64_t seed = 1;
  int epochs = 80;
  std::size_t batch = 64;
  double alpha = 0.001;
  double rho = 0.01;
  std::string out = "opflab_run";
  std::string dataset;
  std::vector<std::string> models;
  bool two_head_baseline = false;
  bool skip_runtime = false;
  std::string log_level = "info";
};

std::vector<std::string> variant_list(const std::string& spec) {
  std::vector<std::string> out;
  if (spec == "all") {
    for (VariantTag t : kAllVariants) out.emplace_back(variant_name(t));
    return out;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(std::string(variant_name(parse_variant(item).tag)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

ExperimentConfig to_config(const Flags& f) {
  ExperimentConfig c;
  c.case_path = f.case_path;
  c.samples = f.n;
  c.delta_pct = f.delta;
  c.variants = variant_list(f.variant);
  c.seed = f.seed;
  c.epochs = f.epochs;
  c.batch = f.batch;
  c.alpha = f.alpha;
  c.rho = f.rho;
  c.out = f.out;
  c.four_head_baseline = !f.two_head_baseline;
  c.skip_runtime = f.skip_runtime;
  if (!f.dataset.empty()) c.dataset = std::filesystem::path(f.dataset);
  return c;
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidConfig, std::string(flag) + " is required");
}

int cmd_gen(const Flags& f) {
  require_flag(f.case_path, "--case");
  const NetworkCase grid = load_matpower(f.case_path);
  GenStats st;
  const Dataset d = gen_dataset(grid, f.n, f.seed, &st);
  std::filesystem::create_directories(f.out);
  const auto path = std::filesystem::path(f.out) / "dataset.opfds";
  write_dataset(d, path);
  std::cout << "wrote " << d.samples.size() << " samples to " << path.string() << " (" << st.resampled
            << " redrawn)\n";
  return 0;
}

int cmd_pair(const Flags& f) {
  require_flag(f.dataset, "--dataset");
  PairStats st;
  const Dataset d = pair_hot_start(read_dataset(f.dataset), f.delta, &st);
  std::filesystem::create_directories(f.out);
  const auto path = std::filesystem::path(f.out) / "dataset_paired.opfds";
  write_dataset(d, path);
  std::cout << "kept " << st.kept << ", dropped " << st.dropped << "; wrote " << path.string() << "\n";
  return 0;
}

int cmd_train(const Flags& f) {
  require_flag(f.case_path, "--case");
  require_flag(f.dataset, "--dataset");
  const NetworkCase grid = load_matpower(f.case_path);
  const Dataset d = read_dataset(f.dataset);
  const Split split = split_dataset(d.samples, 0.8, f.seed);
  TrainConfig tc;
  tc.alpha = f.alpha;
  tc.rho = f.rho;
  tc.batch = f.batch;
  tc.epochs = f.epochs;
  tc.seed = f.seed;
  tc.model.four_head_baseline = !f.two_head_baseline;
  std::filesystem::create_directories(f.out);
  for (const std::string& name : variant_list(f.variant)) {
    const TrainResult r = train(grid, split.train, parse_variant(name), tc);
    const auto path = std::filesystem::path(f.out) / ("model_" + name + ".ckpt");
    save_model(r, tc, path);
    std::cout << name << ": final L_o " << r.history.back().loss_objective << ", saved " << path.string() << "\n";
  }
  return 0;
}

int cmd_eval(const Flags& f) {
  require_flag(f.case_path, "--case");
  require_flag(f.dataset, "--dataset");
  if (f.models.empty()) throw Error(ErrorCode::InvalidConfig, "--model is required");
  const NetworkCase grid = load_matpower(f.case_path);
  const Dataset d = read_dataset(f.dataset);
  const Split split = split_dataset(d.samples, 0.8, f.seed);
  if (split.test.empty()) throw Error(ErrorCode::EmptyTestSet, "the split left no test samples");

  std::cout << kPredictionHeader << "\n";
  std::vector<ModelPredictions> preds;
  for (const std::string& path : f.models) {
    const LoadedModel m = load_model(path);
    preds.push_back(predict_test_set(std::string(variant_name(m.net.variant().tag)), m.net, grid, split.test));
    const PredictionErrorRow r = eval_prediction_errors(grid, preds.back(), split.test);
    std::cout << grid.name << "," << r.model << "," << r.pg << "," << r.qg << "," << r.v << "," << r.theta << ","
              << r.pf << "\n";
  }
  std::cout << "\n" << kCostHeader << "\n";
  std::vector<RestorationInput> inputs;
  for (const ModelPredictions& p : preds) {
    if (p.full_state) inputs.push_back(restoration_from_model(grid, p, split.test));
  }
  inputs.push_back(restoration_from_dc(grid, split.test));
  if (has_hot_start(split.test.front(), grid.num_buses())) {
    inputs.push_back(restoration_from_hot_start(grid, split.test));
  }
  for (const RestorationInput& in : inputs) {
    const CostRow c = eval_cost(grid, restore(grid, in, split.test), split.test);
    std::cout << grid.name << "," << c.model << "," << c.cost_pct << "," << c.rows << "," << c.failures << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained learning for AC optimal power flow"};
  app.set_config("--config", "", "flat key=value file mirroring the flags; flags override it");
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--case", f.case_path, "MATPOWER case file");
  app.add_option("--n", f.n, "number of samples to generate");
  app.add_option("--delta", f.delta, "hot-start threshold in percent")->check(CLI::IsMember({1.0, 2.0, 3.0}));
  app.add_option("--variant", f.variant, "MB|MC|MCD|MCS|MCSL|MCSD, a comma list, or all");
  app.add_option("--seed", f.seed, "run seed");
  app.add_option("--epochs", f.epochs, "training epochs");
  app.add_option("--batch", f.batch, "minibatch size");
  app.add_option("--alpha", f.alpha, "Adam step size");
  app.add_option("--rho", f.rho, "Lagrangian step size");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--dataset", f.dataset, "dataset file to read");
  app.add_option("--model", f.models, "checkpoint(s) to evaluate");
  app.add_flag("--two-head-baseline", f.two_head_baseline, "baseline predicts only v and p_g");
  app.add_flag("--skip-runtime", f.skip_runtime, "omit the timing table");
  app.add_option("--log-level", f.log_level, "trace|debug|info|warn|error|off");

  auto* gen = app.add_subcommand("gen", "generate a ground-truth dataset");
  auto* pair = app.add_subcommand("pair", "attach hot-start states to a dataset");
  auto* trn = app.add_subcommand("train", "train model variants on the 80% split");
  auto* evl = app.add_subcommand("eval", "prediction and cost tables on the 20% split");
  auto* run = app.add_subcommand("run", "full pipeline with all CSV tables");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(f.log_level));

  try {
    if (*gen) return cmd_gen(f);
    if (*pair) return cmd_pair(f);
    if (*trn) return cmd_train(f);
    if (*evl) return cmd_eval(f);
    if (*run) {
      const ExperimentConfig c = to_config(f);
      require_flag(f.case_path, "--case");
      std::cout << "reports in " << run_experiment(c).string() << "\n";
      return 0;
    }
  } catch (const opflab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
