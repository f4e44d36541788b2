#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/error.hpp"

namespace feedback_probe {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (entries_.size() != rows_ * cols_) {
      throw ValidationError("DenseMatrix: entry count " + std::to_string(entries_.size()) +
                            " does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
    }
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (!std::isfinite(entries_[k])) {
        throw ValidationError("DenseMatrix: non-finite entry at flat index " + std::to_string(k), k);
      }
    }
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> e;
    e.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ValidationError("DenseMatrix::from_rows: ragged rows");
      e.insert(e.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(e));
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return entries_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return entries_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return entries_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {entries_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {entries_.data() + i * cols_, cols_};
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  std::span<const double> entries() const noexcept { return entries_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    if (x.size() != cols_) throw ValidationError("DenseMatrix::multiply: dimension mismatch");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const auto r = row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += r[j] * x[j];
      y[i] = s;
    }
    return y;
  }

  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_) throw ValidationError("DenseMatrix product: dimension mismatch");
    DenseMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_)
      throw ValidationError("DenseMatrix sum: dimension mismatch");
    for (std::size_t k = 0; k < a.entries_.size(); ++k) a.entries_[k] += b.entries_[k];
    return a;
  }

  friend DenseMatrix operator*(double s, DenseMatrix a) {
    for (auto& v : a.entries_) v *= s;
    return a;
  }

  /// Horizontal concatenation; row counts must agree.
  static DenseMatrix hconcat(std::span<const DenseMatrix> blocks) {
    std::size_t rows = blocks.empty() ? 0 : blocks.front().rows();
    std::size_t cols = 0;
    for (const auto& b : blocks) {
      if (b.rows() != rows) throw ValidationError("DenseMatrix::hconcat: row mismatch");
      cols += b.cols();
    }
    DenseMatrix out(rows, cols);
    std::size_t offset = 0;
    for (const auto& b : blocks) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
      offset += b.cols();
    }
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

/// Quadratic form u' M u.
inline double quadratic_form(const DenseMatrix& m, std::span<const double> u) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double ri = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) ri += m(i, j) * u[j];
    s += u[i] * ri;
  }
  return s;
}

}  // namespace feedback_probe
