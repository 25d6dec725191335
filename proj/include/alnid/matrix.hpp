#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <utility>
#include <vector>

#include "alnid/errors.hpp"

namespace alnid::linalg {

/// Dense row-major matrix of doubles. Minimal surface: just what the
/// closed-form embedding and the report emitters need.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix: entry count does not match shape");
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// A + c*I. A must be square.
inline Matrix add_scaled_identity(const Matrix& a, double c) {
  if (a.rows() != a.cols()) throw DimensionError("add_scaled_identity: matrix not square");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) out(i, i) += c;
  return out;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("subtract: shapes differ");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

/// Solve A*X = B for X with partial-pivot LU. Throws SingularMatrixError
/// when a pivot vanishes or the pivot-ratio condition estimate exceeds 1e14.
inline Matrix solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) throw DimensionError("solve: matrix not square");
  if (a.rows() != b.rows()) throw DimensionError("solve: right-hand side row count differs");
  const std::size_t n = a.rows();
  if (n == 0) return Matrix(0, b.cols());

  Matrix lu = a;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  double max_abs = 0.0;
  for (double v : lu.data()) max_abs = std::max(max_abs, std::fabs(v));

  double max_pivot = 0.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot_row = k;
    double pivot_mag = std::fabs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double mag = std::fabs(lu(i, k));
      if (mag > pivot_mag) {
        pivot_mag = mag;
        pivot_row = i;
      }
    }
    if (pivot_mag <= max_abs * static_cast<double>(n) *
                         std::numeric_limits<double>::epsilon() ||
        pivot_mag == 0.0)
      throw SingularMatrixError("solve: singular matrix");
    if (pivot_row != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(pivot_row, j));
      std::swap(perm[k], perm[pivot_row]);
    }
    max_pivot = std::max(max_pivot, pivot_mag);
    min_pivot = std::min(min_pivot, pivot_mag);
    const double inv = 1.0 / lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) * inv;
      lu(i, k) = f;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }
  if (max_pivot / min_pivot > 1e14)
    throw SingularMatrixError("solve: condition estimate exceeds threshold");

  Matrix x(n, b.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) x(i, j) = b(perm[i], j);
  // forward substitution (unit lower factor)
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < i; ++k) {
      const double f = lu(i, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) x(i, j) -= f * x(k, j);
    }
  // back substitution
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double f = lu(ii, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) x(ii, j) -= f * x(k, j);
    }
    const double inv = 1.0 / lu(ii, ii);
    for (std::size_t j = 0; j < b.cols(); ++j) x(ii, j) *= inv;
  }
  return x;
}

/// Debug dump, one row per line.
inline void to_csv(const Matrix& a, std::ostream& os) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (j) os << ',';
      os << a(i, j);
    }
    os << '\n';
  }
}

}  // namespace alnid::linalg
