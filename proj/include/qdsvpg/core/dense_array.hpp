// Copyright 2026 The qdsvpg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QDSVPG_CORE_DENSE_ARRAY_HPP
#define QDSVPG_CORE_DENSE_ARRAY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdsvpg/core/errors.hpp"

namespace qdsvpg {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

/// Row-major array of doubles with an explicit shape.
class DenseArray {
 public:
  DenseArray() = default;

  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(extent(shape_), fill) {}

  DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (extent(shape_) != data_.size())
      throw ShapeError("DenseArray: shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
  }

  static DenseArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return DenseArray({rows, cols}, fill);
  }
  static DenseArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return DenseArray({rows, cols}, std::move(data));
  }
  static DenseArray scalar(double v) { return DenseArray({1, 1}, std::vector<double>{v}); }
  static DenseArray column(std::vector<double> data) {
    const std::size_t n = data.size();
    return DenseArray({n, 1}, std::move(data));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  MatrixMap as_matrix() {
    require_matrix();
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                     static_cast<Eigen::Index>(shape_[1]));
  }
  ConstMatrixMap as_matrix() const {
    require_matrix();
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                          static_cast<Eigen::Index>(shape_[1]));
  }

  bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double scalar_value() const {
    if (data_.size() != 1) throw ShapeError("DenseArray: expected a scalar, got " + shape_string(shape_));
    return data_[0];
  }

  friend bool operator==(const DenseArray& a, const DenseArray& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static std::size_t extent(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
    os << ']';
    return os.str();
  }

 private:
  void require_matrix() const {
    if (shape_.size() != 2) throw ShapeError("DenseArray: expected rank-2, got " + shape_string(shape_));
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Rows `idx` of a matrix, in order.
inline DenseArray gather_rows(const DenseArray& m, std::span<const std::size_t> idx) {
  const std::size_t c = m.cols();
  DenseArray out = DenseArray::matrix(idx.size(), c);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(m.values().begin() + static_cast<std::ptrdiff_t>(idx[k] * c), c,
                out.values().begin() + static_cast<std::ptrdiff_t>(k * c));
  return out;
}


}  // namespace qdsvpg

#endif  // QDSVPG_CORE_DENSE_ARRAY_HPP
