#include "opflab/nn/frozen.hpp"

#include "opflab/error.hpp"

namespace opflab::nn {

FrozenMlp::FrozenMlp(const std::vector<DenseLayer>& layers) {
  for (const DenseLayer& l : layers) {
    if (!layers_.empty() && static_cast<std::size_t>(layers_.back().w_t.cols()) != l.in()) {
      throw Error(ErrorCode::DimensionMismatch, "frozen layers do not chain");
    }
    Layer f;
    f.w_t = l.w.value.map().transpose().cast<float>();
    f.b = l.b.value.map().row(0).cast<float>();
    f.act = l.act;
    layers_.push_back(std::move(f));
  }
}

void FrozenMlp::infer(const Eigen::Ref<const RowMatrixF>& x, RowMatrixF& y, RowMatrixF& scratch) const {
  if (layers_.empty() || static_cast<std::size_t>(x.cols()) != in()) {
    throw Error(ErrorCode::DimensionMismatch, "frozen input width does not match the network");
  }
  // Alternate between the two buffers so the last layer lands in y.
  RowMatrixF* bufs[2] = {&y, &scratch};
  std::size_t dst = layers_.size() % 2 == 1 ? 0 : 1;
  const RowMatrixF* src = nullptr;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    RowMatrixF& out = *bufs[dst];
    if (k == 0) {
      out.noalias() = x * l.w_t;
    } else {
      out.noalias() = *src * l.w_t;
    }
    out.rowwise() += l.b;
    if (l.act == Activation::Relu) out = out.cwiseMax(0.0f);
    src = &out;
    dst ^= 1;
  }
}

}  // namespace opflab::nn
