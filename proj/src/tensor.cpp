#include "artic/tensor.hpp"

#include <stdexcept>
#include <string>

namespace artic::diff {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t;
  int64_t n = shape_numel(shape);
  t.shape = std::move(shape);
  t.data.assign(static_cast<size_t>(n), value);
  t.requires_grad = requires_grad;
  return t;
}

Tensor build_tensor(const std::vector<int>& shape, const std::vector<double>& values,
                    bool requires_grad) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("length mismatch " + std::to_string(n) + " vs " +
                                std::to_string(values.size()));
  }
  Tensor t;
  t.shape = shape;
  t.data = values;
  t.requires_grad = requires_grad;
  return t;
}

}  // namespace artic::diff
