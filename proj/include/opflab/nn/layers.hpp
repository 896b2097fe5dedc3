#pragma once

#include "opflab/nn/kernels.hpp"
#include "opflab/nn/tape.hpp"
#include "opflab/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <vector>

namespace opflab::nn {

/// o = act(W x + b) with W out x in and b stored as a 1 x out row.
struct DenseLayer {
  Parameter w;
  Parameter b;
  Activation act = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation a);

  std::size_t in() const { return w.value.cols(); }
  std::size_t out() const { return w.value.rows(); }

  /// W and b uniform in +-sqrt(1 / in).
  void initialize(std::mt19937_64& rng);

  Var forward(Tape& tape, Var x);
};

/// Single-layer forward without a tape, checking dimensions.
Tensor dense_forward(const Tensor& x, const DenseLayer& layer, Backend backend = Backend::Parallel);

/// A chain of dense layers. `widths` lists in, hidden..., out; every layer
/// uses ReLU except the last, which is Identity.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(const std::vector<std::size_t>& widths);

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }
  std::size_t num_parameters() const;

  void initialize(std::mt19937_64& rng);
  Var forward(Tape& tape, Var x);
  /// Tape-free inference.
  Tensor infer(const Tensor& x, Backend backend = Backend::Parallel) const;

  void collect(std::vector<Parameter*>& out);

 private:
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//   #opfnn v1 layers=<L>
//   layer <in> <out> <relu|identity>
//   <W row-major, out lines of in values>
//   <b, one line of out values>
//   ... repeated per layer; 17 significant digits.
// ---------------------------------------------------------------------------

void write_layers(std::ostream& out, const std::vector<const DenseLayer*>& layers);
std::vector<DenseLayer> read_layers(std::istream& in);

void save_checkpoint(const std::vector<const DenseLayer*>& layers, const std::filesystem::path& path);
std::vector<DenseLayer> load_checkpoint(const std::filesystem::path& path);

}  // namespace opflab::nn
