#include "tzsh/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "tzsh/errors.hpp"

namespace tzsh {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Tensor2: data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
  }
}

Tensor2 Tensor2::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return {rows.size(), cols, std::move(data)};
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor2 Tensor2::gather_rows(std::span<const std::size_t> indices) const {
  Tensor2 out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw DimensionError("gather_rows: index out of range");
    std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
  }
  return out;
}

void Tensor2::scatter_add_rows(std::span<const std::size_t> indices, const Tensor2& src) {
  if (src.rows() != indices.size() || src.cols() != cols_) {
    throw DimensionError("scatter_add_rows: " + src.shape_string() + " into " + shape_string());
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw DimensionError("scatter_add_rows: index out of range");
    auto dst = row(indices[i]);
    auto s = src.row(i);
    for (std::size_t c = 0; c < cols_; ++c) dst[c] += s[c];
  }
}

Tensor2& Tensor2::operator+=(const Tensor2& other) {
  if (!same_shape(other)) {
    throw DimensionError("operator+=: " + shape_string() + " vs " + other.shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2& Tensor2::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + a.shape_string() + "^T x " + b.shape_string());
  }
  Tensor2 out(a.cols(), b.cols());
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

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + a.shape_string() + " x " + b.shape_string() + "^T");
  }
  Tensor2 out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor2 vstack(const Tensor2& top, const Tensor2& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw DimensionError("vstack: " + top.shape_string() + " over " + bottom.shape_string());
  }
  std::vector<double> data = top.data();
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return {top.rows() + bottom.rows(), top.cols(), std::move(data)};
}

}  // namespace tzsh
