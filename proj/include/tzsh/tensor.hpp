#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tzsh {

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested rows; all rows must have equal length.
  static Tensor2 from_rows(const std::vector<std::vector<double>>& rows);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor2& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  /// Rows at the given indices, in order (duplicates allowed).
  Tensor2 gather_rows(std::span<const std::size_t> indices) const;
  /// Adds each row of `src` into row indices[i] of *this.
  void scatter_add_rows(std::span<const std::size_t> indices, const Tensor2& src);

  Tensor2& operator+=(const Tensor2& other);
  Tensor2& operator*=(double s);

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a·b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// aᵀ·b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// a·bᵀ
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);

/// Vertical concatenation.
Tensor2 vstack(const Tensor2& top, const Tensor2& bottom);

}  // namespace tzsh
