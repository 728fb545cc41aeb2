#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace artic::diff {

// Dense row-major tensor of doubles. The grad buffer, when present, always
// has the same element count as data.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  // 2-D accessors; a 1-D tensor counts as a single row
  int rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 0 : shape.back(); }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
};

int64_t shape_numel(const std::vector<int>& shape);

Tensor build_tensor(const std::vector<int>& shape, const std::vector<double>& values,
                    bool requires_grad = false);

}  // namespace artic::diff
