#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssvmr {

// Dense row-major matrix of doubles. Vectors are 1 x n rows, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::vector<double> values);
  static Tensor column_vector(std::vector<double> values);
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Value of a 1 x 1 tensor.
  double item() const;
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain value kernels, shared by the tape ops and by inference code that has
// no use for gradients.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace ssvmr
