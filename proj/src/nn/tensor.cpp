#include "opflab/nn/tensor.hpp"

#include "opflab/error.hpp"

#include <cmath>
#include <string>

namespace opflab::nn {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "tensor data has " + std::to_string(data_.size()) +
                                                  " values for shape " + std::to_string(rows) + "x" +
                                                  std::to_string(cols));
  }
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace opflab::nn
