#include "opflab/learn.hpp"
#include "opflab/nn/kernels.hpp"

#include <algorithm>

namespace opflab {

namespace {

constexpr std::size_t kRowBlock = 128;

void to_float(const nn::Tensor& t, std::size_t r0, std::size_t rows, nn::RowMatrixF& out) {
  out = t.map().middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(rows)).cast<float>();
}

}  // namespace

FrozenOpfNet::FrozenOpfNet(const OpfNet& net)
    : load_width_(net.load_width()), full_state_(net.full_state()), trunk_(net.trunk().layers()) {
  const auto h = static_cast<Eigen::Index>(net.trunk().out());
  Eigen::Index total = 0;
  for (std::size_t k = 0; k < kNumHeads; ++k) {
    const nn::Mlp& m = net.head(static_cast<Head>(k));
    if (m.layers().empty()) continue;
    HeadEntry& e = heads_[k];
    e.present = true;
    e.offset = total;
    e.width = static_cast<Eigen::Index>(m.layers().front().out());
    total += e.width;
  }
  first_w_t_.resize(h, total);
  first_b_.resize(total);
  for (std::size_t k = 0; k < kNumHeads; ++k) {
    HeadEntry& e = heads_[k];
    if (!e.present) continue;
    const auto& layers = net.head(static_cast<Head>(k)).layers();
    const nn::DenseLayer& first = layers.front();
    const Eigen::MatrixXf w_t = first.w.value.map().transpose().cast<float>();
    first_w_t_.middleCols(e.offset, e.width) = w_t.topRows(h);
    e.side_w_t = w_t.bottomRows(w_t.rows() - h);
    first_b_.segment(e.offset, e.width) = first.b.value.map().row(0).cast<float>();
    e.relu = first.act == nn::Activation::Relu;
    if (layers.size() > 1) e.rest = nn::FrozenMlp({layers.begin() + 1, layers.end()});
  }
}

HeadTensors FrozenOpfNet::predict(const ModelInput& input) const {
  if (input.loads.cols() != load_width_) {
    throw Error(ErrorCode::DimensionMismatch, "load input width does not match the network");
  }
  const std::size_t rows = input.loads.rows();
  const std::array<const nn::Tensor*, kNumHeads> side = {&input.v0, &input.theta0, &input.pg0, &input.qg0};
  HeadTensors out;
  std::array<nn::Tensor*, kNumHeads> dst = {&out.v, &out.theta, &out.pg, &out.qg};
  for (std::size_t k = 0; k < kNumHeads; ++k) {
    const HeadEntry& e = heads_[k];
    if (!e.present) continue;
    if (e.side_w_t.rows() > 0 && side[k]->cols() != static_cast<std::size_t>(e.side_w_t.rows())) {
      throw Error(ErrorCode::DimensionMismatch, "hot-start input width does not match the network");
    }
    *dst[k] = nn::Tensor(rows, e.rest.empty() ? static_cast<std::size_t>(e.width) : e.rest.out());
  }

  const std::size_t nblk = (rows + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static) num_threads(nn::thread_budget()) if (nblk > 1)
  for (std::size_t b = 0; b < nblk; ++b) {
    const std::size_t r0 = b * kRowBlock;
    const std::size_t nr = std::min(kRowBlock, rows - r0);
    nn::RowMatrixF x, trunk_out, scratch, fused, s, head_out;
    to_float(input.loads, r0, nr, x);
    trunk_.infer(x, trunk_out, scratch);
    fused.noalias() = trunk_out * first_w_t_;
    fused.rowwise() += first_b_;
    for (std::size_t k = 0; k < kNumHeads; ++k) {
      const HeadEntry& e = heads_[k];
      if (!e.present) continue;
      auto z = fused.middleCols(e.offset, e.width);
      if (e.side_w_t.rows() > 0) {
        to_float(*side[k], r0, nr, s);
        z.noalias() += s * e.side_w_t;
      }
      if (e.relu) z = z.cwiseMax(0.0f);
      const float* res = nullptr;
      Eigen::Index ld = 0;
      if (e.rest.empty()) {
        head_out = z;
      } else {
        e.rest.infer(z, head_out, scratch);
      }
      res = head_out.data();
      ld = head_out.cols();
      nn::Tensor& d = *dst[k];
      for (std::size_t r = 0; r < nr; ++r) {
        for (std::size_t c = 0; c < d.cols(); ++c) d(r0 + r, c) = static_cast<double>(res[r * ld + c]);
      }
    }
  }
  return out;
}

}  // namespace opflab
