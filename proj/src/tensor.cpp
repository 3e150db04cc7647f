#include "ssvmr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssvmr/error.hpp"

namespace ssvmr {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::column_vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on non-scalar tensor of shape " + shape_string());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul " + a.shape_string() + " * " + b.shape_string());
  }
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt " + a.shape_string() + " * " + b.shape_string() + "^T");
  }
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn " + a.shape_string() + "^T * " + b.shape_string());
  }
  Tensor out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ar = a.row(k);
    auto br = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw DimensionError("mean_rows of an empty tensor");
  Tensor out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j];
  }
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (auto& v : out.data()) v *= inv;
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows column mismatch " + p.shape_string());
    }
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor(rows, cols, std::move(data));
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    auto o = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) o[j] = r[j] - lz;
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = log_softmax_rows(a);
  for (auto& v : out.data()) v = std::exp(v);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot of unequal lengths");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace ssvmr
