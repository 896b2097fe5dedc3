#include "opflab/experiment.hpp"
#include "opflab/nn/kernels.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#ifndef OPFLAB_GIT_DESCRIBE
#define OPFLAB_GIT_DESCRIBE "unknown"
#endif

namespace opflab {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const char* header) : path_(path), out_(path) {
    if (!out_) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out_ << header << "\n";
  }
  template <class... T>
  void row(const T&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << "\n";
    if (!out_) throw Error(ErrorCode::IoFailure, "cannot write " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  CsvFile f(path, kHistoryHeader);
  for (const EpochRecord& r : history) {
    std::ostringstream line;
    line << r.epoch << "," << num(r.loss_objective) << "," << num(r.loss_constraints);
    for (double x : r.nu_mean) line << "," << num(x);
    for (double x : r.lambda) line << "," << num(x);
    f.row(line.str());
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const std::string& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.case_path.empty()) throw Error(ErrorCode::InvalidConfig, "no case file given");
  if (c.samples < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 samples");
  if (c.delta_pct != 1.0 && c.delta_pct != 2.0 && c.delta_pct != 3.0) {
    throw Error(ErrorCode::InvalidConfig, "hot-start threshold must be 1, 2 or 3 percent");
  }
  if (c.variants.empty()) throw Error(ErrorCode::InvalidConfig, "no model variant selected");
  for (const std::string& v : c.variants) (void)parse_variant(v);
  if (c.epochs < 1 || c.batch < 1 || !(c.alpha > 0.0) || !(c.rho > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "training needs epochs, batch, alpha and rho > 0");
  }
  if (!(c.train_ratio > 0.0 && c.train_ratio < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train ratio must lie in (0, 1)");
  }
}

std::filesystem::path run_experiment(const ExperimentConfig& config) {
  validate(config);
  std::filesystem::create_directories(config.out);
  const std::filesystem::path& out = config.out;

  std::ostringstream manifest;
  manifest << "seed=" << config.seed << "\n";
  manifest << "git_describe=" << OPFLAB_GIT_DESCRIBE << "\n";
  manifest << "threads=" << nn::thread_budget() << "\n";
  manifest << "config.case=" << config.case_path.string() << "\n";
  manifest << "config.n=" << config.samples << "\n";
  manifest << "config.delta=" << num(config.delta_pct) << "\n";
  manifest << "config.variant=" << join(config.variants) << "\n";
  manifest << "config.epochs=" << config.epochs << "\n";
  manifest << "config.batch=" << config.batch << "\n";
  manifest << "config.alpha=" << num(config.alpha) << "\n";
  manifest << "config.rho=" << num(config.rho) << "\n";
  manifest << "config.train_ratio=" << num(config.train_ratio) << "\n";
  manifest << "config.four_head_baseline=" << (config.four_head_baseline ? 1 : 0) << "\n";
  if (config.dataset) manifest << "config.dataset=" << config.dataset->string() << "\n";

  auto flush_manifest = [&](const std::string& status) {
    std::ofstream f(out / "manifest.txt");
    f << manifest.str() << "status=" << status << "\n";
  };

  try {
    const NetworkCase grid = load_matpower(config.case_path);
    const std::string case_name = grid.name.empty() ? config.case_path.stem().string() : grid.name;

    Dataset raw;
    if (config.dataset) {
      raw = read_dataset(*config.dataset);
      if (raw.dims != grid.dims()) throw Error(ErrorCode::DimensionMismatch, "dataset does not match the case");
      manifest << "dataset.reused=1\n";
    } else {
      GenStats gs;
      raw = gen_dataset(grid, config.samples, config.seed, &gs);
      write_dataset(raw, out / "dataset.opfds");
      manifest << "dataset.draws=" << gs.attempts << "\ndataset.redrawn=" << gs.resampled << "\n";
    }
    PairStats ps;
    const Dataset paired = pair_hot_start(raw, config.delta_pct, &ps);
    write_dataset(paired, out / "dataset_paired.opfds");
    manifest << "pairing.kept=" << ps.kept << "\npairing.dropped=" << ps.dropped << "\n";

    const Split split = split_dataset(paired.samples, config.train_ratio, config.seed);
    if (split.test.empty()) throw Error(ErrorCode::EmptyTestSet, "the split left no test samples");
    manifest << "split.train=" << split.train.size() << "\nsplit.test=" << split.test.size() << "\n";

    TrainConfig tc;
    tc.alpha = config.alpha;
    tc.rho = config.rho;
    tc.batch = config.batch;
    tc.epochs = config.epochs;
    tc.seed = config.seed;
    tc.model.four_head_baseline = config.four_head_baseline;

    std::vector<ModelPredictions> predictions;
    for (const std::string& name : config.variants) {
      const ModelVariant variant = parse_variant(name);
      const std::string tag(variant_name(variant.tag));
      spdlog::info("training {} on {} samples", tag, split.train.size());
      const TrainResult tr = train(grid, split.train, variant, tc);
      save_model(tr, tc, out / ("model_" + tag + ".ckpt"));
      write_history(out / ("history_" + tag + ".csv"), tr.history);
      manifest << "train." << tag << ".epochs=" << tr.history.size() << "\n";
      predictions.push_back(predict_test_set(tag, tr.net, grid, split.test));
    }

    {
      CsvFile f(out / "prediction_errors.csv", kPredictionHeader);
      for (const ModelPredictions& m : predictions) {
        const PredictionErrorRow r = eval_prediction_errors(grid, m, split.test);
        f.row(case_name, r.model, num(r.pg), num(r.qg), num(r.v), num(r.theta), num(r.pf));
      }
    }

    std::vector<Restoration> restorations;
    for (const ModelPredictions& m : predictions) {
      if (m.full_state) restorations.push_back(restore(grid, restoration_from_model(grid, m, split.test), split.test));
    }
    restorations.push_back(restore(grid, restoration_from_dc(grid, split.test), split.test));
    restorations.push_back(restore(grid, restoration_from_hot_start(grid, split.test), split.test));
    {
      CsvFile lf(out / "load_flow.csv", kLoadFlowHeader);
      CsvFile cost(out / "cost.csv", kCostHeader);
      for (const Restoration& r : restorations) {
        const LoadFlowRow a = eval_load_flow(grid, r, split.test);
        lf.row(case_name, a.model, num(a.left_pg), num(a.left_v), num(a.right_pg), num(a.right_v), a.rows,
               a.failures);
        const CostRow c = eval_cost(grid, r, split.test);
        cost.row(case_name, c.model, num(c.cost_pct), c.rows, c.failures);
        manifest << "restoration." << r.name << ".failures=" << r.failures() << "\n";
      }
    }

    if (!config.skip_runtime) {
      const RuntimeTable t = eval_runtime(grid, split.test, predictions);
      CsvFile f(out / "runtime.csv", kRuntimeHeader);
      auto speedup = [&](double s) { return num(s > 0.0 ? t.ac / s : std::nan("")); };
      f.row(case_name, "AC", num(t.ac), speedup(t.ac));
      f.row(case_name, "LF_S", num(t.lf_s), speedup(t.lf_s));
      f.row(case_name, "DC", num(t.dc), speedup(t.dc));
      for (const auto& [name, s] : t.prediction) f.row(case_name, name, num(s), speedup(s));
    }
  } catch (const std::exception& ex) {
    flush_manifest(std::string("error: ") + ex.what());
    throw;
  }
  flush_manifest("ok");
  return out;
}

}  // namespace opflab
