#pragma once

#include <Eigen/Core>

#include <array>
#include <cassert>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace unsuperpoint {

// Dense row-major buffer with up to 4 dimensions. Feature maps use
// channels-last {N, H, W, C} so that per-pixel channel vectors are
// contiguous, which is what the im2col/GEMM convolution path wants.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims) { resize(std::move(dims)); }

  void resize(std::vector<std::size_t> dims) {
    dims_ = std::move(dims);
    std::size_t n = 1;
    for (std::size_t d : dims_) n *= d;
    data_.assign(n, T{0});
  }

  std::size_t size() const { return data_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{0}); }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  using MatrixMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  // View the buffer as a rows x cols row-major matrix.
  MatrixMap as_matrix(std::size_t rows, std::size_t cols) {
    assert(rows * cols == data_.size());
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const {
    assert(rows * cols == data_.size());
    return ConstMatrixMap(data_.data(), rows, cols);
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

}  // namespace unsuperpoint
