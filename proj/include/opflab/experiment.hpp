#pragma once

#include "opflab/acpf.hpp"
#include "opflab/grid_io.hpp"
#include "opflab/learn.hpp"
#include "opflab/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opflab {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct GenStats {
  std::size_t attempts = 0;
  std::size_t resampled = 0;
};

/// Loads drawn componentwise from U(0.8, 1.2) x nominal. Draw j of sample i
/// uses its own generator seeded from (seed, i, j), so the result does not
/// depend on the thread count. Draws whose solve fails or whose solution
/// fails verification are redrawn; a sample still unsolved after 10 draws
/// throws CaseInfeasible.
Dataset gen_dataset(const NetworkCase& net, std::size_t count, std::uint64_t seed, GenStats* stats = nullptr,
                    const SolverOptions& options = {});

/// Bus-indexed sample for the loads and the solved state; no hot start.
Sample make_sample(const NetworkCase& net, const GridState& solution);

/// Independent check of a sample's target: KCL residual, all bounds, and
/// every violation degree (Ohm families excluded) within tol.
bool verify_sample(const NetworkCase& net, const Sample& sample, double tol = 1e-6);

/// The target of a sample as a grid state with its loads.
GridState target_state(const NetworkCase& net, const Sample& sample);

struct PairStats {
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

/// Fills each sample's hot-start block with the solution of the sample whose
/// total active load is nearest (ties to the lower index, never itself),
/// provided the gap is within delta_pct percent; other samples are dropped.
/// Throws NoPairs when nothing is kept.
Dataset pair_hot_start(const Dataset& data, double delta_pct, PairStats* stats = nullptr);

/// |xhat - x|_1 / |x|_1 * 100. Throws ZeroReference when |x|_1 == 0.
double metric_l1_pct(std::span<const double> xhat, std::span<const double> x);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};
/// Shuffles with the seed and puts the first round(ratio * N) in train.
Split split_dataset(const std::vector<Sample>& samples, double train_ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Predictions of one model over a test set.
struct ModelPredictions {
  std::string name;
  HeadTensors pred;
  bool full_state = false;
  /// Mean wall-clock seconds per sample for the batched forward pass.
  double seconds_per_sample = 0.0;
};

ModelPredictions predict_test_set(const std::string& name, const OpfNet& net, const NetworkCase& grid,
                                  std::span<const Sample> test);

/// Mean per-sample metric; NaN where a model does not predict the quantity.
struct PredictionErrorRow {
  std::string model;
  double pg = 0.0, qg = 0.0, v = 0.0, theta = 0.0, pf = 0.0;
};
PredictionErrorRow eval_prediction_errors(const NetworkCase& grid, const ModelPredictions& model,
                                          std::span<const Sample> test);

/// Restoration target per test sample: dispatch per generator, v per bus,
/// and a warm start for angles and reactive dispatch.
struct RestorationInput {
  std::string name;
  std::vector<LoadFlowTarget> targets;
  std::vector<GridState> warm;
};

RestorationInput restoration_from_model(const NetworkCase& grid, const ModelPredictions& model,
                                        std::span<const Sample> test);
/// DC dispatch with v = 1.
RestorationInput restoration_from_dc(const NetworkCase& grid, std::span<const Sample> test);
/// Hot-start state as the target.
RestorationInput restoration_from_hot_start(const NetworkCase& grid, std::span<const Sample> test);

struct Restoration {
  std::string name;
  std::vector<LoadFlowTarget> targets;
  std::vector<SolveReport> reports;
  std::vector<char> converged;
  std::size_t failures() const;
};
/// Solves every load flow, in parallel across samples.
Restoration restore(const NetworkCase& grid, const RestorationInput& input, std::span<const Sample> test,
                    const SolverOptions& options = {});

/// Left: prediction vs its restoration. Right: restoration vs ground truth.
/// Averages over converged rows only.
struct LoadFlowRow {
  std::string model;
  double left_pg = 0.0, left_v = 0.0;
  double right_pg = 0.0, right_v = 0.0;
  std::size_t rows = 0;
  std::size_t failures = 0;
};
LoadFlowRow eval_load_flow(const NetworkCase& grid, const Restoration& r, std::span<const Sample> test);

struct CostRow {
  std::string model;
  double cost_pct = 0.0;
  std::size_t rows = 0;
  std::size_t failures = 0;
};
CostRow eval_cost(const NetworkCase& grid, const Restoration& r, std::span<const Sample> test);

struct RuntimeTable {
  double ac = 0.0;
  double lf_s = 0.0;
  double dc = 0.0;
  std::vector<std::pair<std::string, double>> prediction;  // per model
  std::size_t samples = 0;
};
/// Mean wall-clock seconds per method, solved serially on the test set.
/// Throws EmptyTestSet.
RuntimeTable eval_runtime(const NetworkCase& grid, std::span<const Sample> test,
                          std::span<const ModelPredictions> models);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::filesystem::path case_path;
  std::size_t samples = 2000;
  double delta_pct = 1.0;
  std::vector<std::string> variants = {"MB", "MC", "MCD", "MCS", "MCSL", "MCSD"};
  std::uint64_t seed = 1;
  int epochs = 80;
  std::size_t batch = 64;
  double alpha = 0.001;
  double rho = 0.01;
  double train_ratio = 0.8;
  bool four_head_baseline = true;
  /// Existing dataset to reuse instead of generating one.
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path out = "opflab_run";
  /// Skip the timing table (it is the only non-deterministic output).
  bool skip_runtime = false;
};

/// Throws InvalidConfig / UnknownVariant for bad settings; no computation.
void validate(const ExperimentConfig& config);

/// Generates (or reuses) the dataset, pairs it, trains every variant, and
/// writes the CSV tables, checkpoints and manifest into config.out. The
/// manifest is written even when a stage throws.
std::filesystem::path run_experiment(const ExperimentConfig& config);

/// Column headers of the CSV tables.
inline constexpr const char* kPredictionHeader = "case,model,pg,qg,v,theta,pf";
inline constexpr const char* kLoadFlowHeader = "case,model,left_pg,left_v,right_pg,right_v,rows,failures";
inline constexpr const char* kCostHeader = "case,model,cost_pct,rows,failures";
inline constexpr const char* kRuntimeHeader = "case,method,seconds,speedup_vs_ac";
inline constexpr const char* kHistoryHeader =
    "epoch,loss_objective,loss_constraints,nu_2a,nu_2b,nu_3a,nu_3b,nu_4,nu_5a,nu_5b,nu_6a,nu_6b,"
    "lambda_2a,lambda_2b,lambda_3a,lambda_3b,lambda_4,lambda_5a,lambda_5b,lambda_6a,lambda_6b";

}  // namespace opflab
