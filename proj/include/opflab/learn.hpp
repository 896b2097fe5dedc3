#pragma once

#include "opflab/acpf.hpp"
#include "opflab/error.hpp"
#include "opflab/grid_io.hpp"
#include "opflab/nn/frozen.hpp"
#include "opflab/nn/layers.hpp"
#include "opflab/nn/tape.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opflab {

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

enum class VariantTag { MB, MC, MCD, MCS, MCSL, MCSD };

struct ModelVariant {
  VariantTag tag = VariantTag::MB;
  bool uses_constraints = false;
  bool uses_hot_start = false;
  bool trainable_lambda = false;
  bool dual_update = false;

  static ModelVariant of(VariantTag tag);
};

/// Accepts "MB", "M_B", "mb", ... for every tag; throws UnknownVariant.
ModelVariant parse_variant(std::string_view name);
std::string_view variant_name(VariantTag tag);
inline constexpr std::array<VariantTag, 6> kAllVariants = {VariantTag::MB,  VariantTag::MC,   VariantTag::MCD,
                                                           VariantTag::MCS, VariantTag::MCSL, VariantTag::MCSD};

/// One multiplier per constraint family, in Family order.
using Multipliers = std::array<double, kNumFamilies>;

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

enum class Head : std::size_t { V = 0, Theta, Pg, Qg };
inline constexpr std::size_t kNumHeads = 4;

struct ModelOptions {
  /// The baseline predicts only (v, p_g) at generator buses unless this is
  /// set, in which case it carries all four heads with the constrained
  /// models' sizes.
  bool four_head_baseline = true;
};

/// Trunk over the load inputs plus one sub-network per predicted quantity.
/// Heads absent from a variant are empty.
class OpfNet {
 public:
  OpfNet() = default;
  OpfNet(const ModelVariant& variant, const CaseDims& dims, const ModelOptions& options = {});

  const ModelVariant& variant() const { return variant_; }
  const CaseDims& dims() const { return dims_; }
  const ModelOptions& options() const { return options_; }

  bool has_head(Head h) const { return !heads_[static_cast<std::size_t>(h)].layers().empty(); }
  /// True when the network predicts v and theta at every bus and dispatch at
  /// every generator bus.
  bool full_state() const { return has_head(Head::Theta) && has_head(Head::Qg); }
  /// Width of the load input: 2l, or 4l with a hot start.
  std::size_t load_width() const;
  /// Output width of a head (0 when absent).
  std::size_t head_width(Head h) const;

  nn::Mlp& trunk() { return trunk_; }
  const nn::Mlp& trunk() const { return trunk_; }
  nn::Mlp& head(Head h) { return heads_[static_cast<std::size_t>(h)]; }
  const nn::Mlp& head(Head h) const { return heads_[static_cast<std::size_t>(h)]; }

  void initialize(std::uint64_t seed);
  std::vector<nn::Parameter*> parameters();
  std::size_t num_parameters() const;
  /// Trunk layers, then heads in Head order.
  std::vector<const nn::DenseLayer*> layer_list() const;

 private:
  ModelVariant variant_;
  CaseDims dims_;
  ModelOptions options_;
  nn::Mlp trunk_;
  std::array<nn::Mlp, kNumHeads> heads_;
};

/// Builds and seeds a network for the variant. Layer widths are functions of
/// (n, l, g) only.
OpfNet build_model(const ModelVariant& variant, const CaseDims& dims, std::uint64_t seed,
                   const ModelOptions& options = {});

// ---------------------------------------------------------------------------
// Data layout
// ---------------------------------------------------------------------------

/// Case-derived index sets and constants used to turn bus-indexed samples
/// into network inputs and to evaluate the violation degrees on a tape.
struct CaseLayout {
  CaseDims dims;
  std::vector<std::size_t> load_buses;
  std::vector<std::size_t> gen_buses;
  std::vector<std::size_t> line_from, line_to;  // per directed line
  std::vector<std::size_t> limited_lines;       // directed lines with finite s_max

  explicit CaseLayout(const NetworkCase& net);
  CaseLayout() = default;
};

/// Network inputs for a batch. Hot-start tensors are empty for variants
/// without a hot start.
struct ModelInput {
  nn::Tensor loads;  // B x 2l or B x 4l
  nn::Tensor v0, theta0, pg0, qg0;
};

/// Per-head tensors for a batch, also used for targets.
struct HeadTensors {
  nn::Tensor v, theta, pg, qg;
};

/// Everything the losses need for a set of samples, row-aligned.
struct PreparedData {
  ModelInput input;
  HeadTensors target;
  nn::Tensor p_d, q_d;            // B x n
  nn::Tensor truth_pf, truth_qf;  // B x e, flows of the labels
  std::size_t rows() const { return p_d.rows(); }
};

ModelInput make_input(const OpfNet& net, const CaseLayout& layout, std::span<const Sample> samples);
PreparedData prepare_data(const OpfNet& net, const CaseLayout& layout, const NetworkCase& grid,
                          std::span<const Sample> samples);
/// Row subset, in the order given.
PreparedData select_rows(const PreparedData& data, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Forward passes and losses
// ---------------------------------------------------------------------------

struct HeadVars {
  std::optional<nn::Var> v, theta, pg, qg;
};

HeadVars forward(OpfNet& net, nn::Tape& tape, const ModelInput& input);
/// Tape-free forward pass.
HeadTensors predict(const OpfNet& net, const ModelInput& input, nn::Backend backend = nn::Backend::Parallel);

/// Single-precision inference copy of a network, used for deployment-style
/// prediction and its timing. The first layers of all heads read the same
/// trunk output and run as one product. Row blocks are spread over the thread
/// budget; results do not depend on the thread count.
class FrozenOpfNet {
 public:
  explicit FrozenOpfNet(const OpfNet& net);
  HeadTensors predict(const ModelInput& input) const;
  bool full_state() const { return full_state_; }

 private:
  struct HeadEntry {
    bool present = false;
    Eigen::Index offset = 0;   // columns of the fused first layer
    Eigen::Index width = 0;
    Eigen::MatrixXf side_w_t;  // side-input rows of the first layer
    bool relu = true;
    nn::FrozenMlp rest;        // layers after the first
  };
  std::size_t load_width_ = 0;
  bool full_state_ = false;
  nn::FrozenMlp trunk_;
  Eigen::MatrixXf first_w_t_;  // trunk rows of every head's first layer, side by side
  Eigen::RowVectorXf first_b_;
  std::array<HeadEntry, kNumHeads> heads_;
};

/// Batch mean of the summed squared errors over the heads present.
nn::Var loss_objective(nn::Tape& tape, const HeadVars& pred, const HeadTensors& target);

/// B x 9 violation degrees of the predictions, one column per Family. The
/// Ohm columns are zero unless include_ohm. Needs all four heads.
nn::Var constraint_violations(nn::Tape& tape, const HeadVars& pred, const PreparedData& data,
                              const CaseLayout& layout, const NetworkCase& grid,
                              const ConstraintOptions& options = {}, bool include_ohm = true);

/// Batch mean of sum_c lambda_c nu_c, with lambda a 1 x 9 row.
nn::Var loss_constraints(nn::Var violations, nn::Var lambda);

/// Column means of a B x 9 violation tensor.
Multipliers mean_violations(const nn::Tensor& violations);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double alpha = 0.001;
  double rho = 0.01;
  std::size_t batch = 64;
  int epochs = 80;
  std::uint64_t seed = 1;
  /// Trainable multipliers ascend on L_c; false makes them descend.
  bool cs_l_ascent = true;
  ConstraintOptions constraints;
  ModelOptions model;
};

struct EpochRecord {
  int epoch = 0;
  double loss_objective = 0.0;    // minibatch mean
  double loss_constraints = 0.0;  // minibatch mean
  Multipliers nu_mean{};          // over the training set after the epoch
  Multipliers lambda{};           // after the epoch's update
};

struct TrainResult {
  OpfNet net;
  Multipliers lambda{};
  std::vector<EpochRecord> history;
};

/// Thrown when a minibatch loss is not finite; carries the epochs completed.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochRecord> history)
      : Error(ErrorCode::NanLoss, what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

/// Minibatch Adam on L_o + L_c; after each epoch the violation degrees of
/// the training set are recomputed and, for dual-update variants,
/// lambda += rho * nu_mean.
TrainResult train(const NetworkCase& grid, std::span<const Sample> samples, const ModelVariant& variant,
                  const TrainConfig& config);

/// Initial multipliers: 1 for fixed-weight constrained variants, 0 otherwise.
Multipliers initial_multipliers(const ModelVariant& variant);

// ---------------------------------------------------------------------------
// Persistence: nn checkpoint plus a key=value sidecar at <path>.meta.
// ---------------------------------------------------------------------------

void save_model(const TrainResult& model, const TrainConfig& config, const std::filesystem::path& path);
struct LoadedModel {
  OpfNet net;
  Multipliers lambda{};
};
LoadedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Predictions as grid states
// ---------------------------------------------------------------------------

/// Splits a per-bus dispatch total over the bus's generators at a common
/// fraction of their ranges.
std::vector<double> split_bus_dispatch(const NetworkCase& grid, std::span<const double> per_bus,
                                       bool reactive);

/// Row `r` of a prediction as a GridState with the sample's loads. Needs a
/// full-state network.
GridState predicted_state(const NetworkCase& grid, const CaseLayout& layout, const HeadTensors& pred,
                          std::size_t r, const Sample& sample);

}  // namespace opflab
