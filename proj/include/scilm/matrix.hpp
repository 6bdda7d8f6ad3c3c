#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "scilm/error.hpp"

namespace scilm {

// Dense row-major matrix of 64-bit floats; the universal numeric carrier.
// Column vectors are n x 1 matrices, scalars 1 x 1.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw ContractViolation("Matrix: dimensions must be positive");
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) throw ContractViolation("Matrix: dimensions must be positive");
    if (values_.size() != rows * cols)
      throw ContractViolation("Matrix: values length " + std::to_string(values_.size()) +
                              " != " + shape_string(rows, cols));
  }

  static Matrix column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(n, 1, std::move(values));
  }

  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix row_as_column(std::size_t i) const {
    std::vector<double> out(cols_);
    for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
    return column(std::move(out));
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> values_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ContractViolation("matmul: inner dimensions disagree, " + a.shape() + " * " + b.shape());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ContractViolation("add: shape mismatch " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// Elementwise max(0, x); the subgradient at exactly 0 is taken as 0.
inline Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return out;
}

// Max-subtracted softmax over a column vector; output sums to 1.
inline Matrix softmax(const Matrix& v) {
  if (v.empty() || v.cols() != 1) throw ContractViolation("softmax: expects a non-empty column vector");
  double mx = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) mx = std::max(mx, v[i]);
  Matrix out(v.rows(), 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= sum;
  return out;
}

inline double dot(const Matrix& u, const Matrix& v) {
  if (u.size() != v.size())
    throw ContractViolation("dot: length mismatch " + u.shape() + " vs " + v.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm2(const Matrix& u) { return std::sqrt(dot(u, u)); }

// Standalone cosine similarity. Degenerate norms are a hard error here;
// the training-time tape op floors them instead (see tape.hpp).
inline double cosine_sim(const Matrix& u, const Matrix& v) {
  if (u.size() != v.size())
    throw ContractViolation("cosine_sim: length mismatch " + u.shape() + " vs " + v.shape());
  const double nu = norm2(u), nv = norm2(v);
  if (nu < 1e-12 || nv < 1e-12)
    throw NumericalError("cosine_sim: vector norm below 1e-12");
  return dot(u, v) / (nu * nv);
}

inline double sq_dist(const Matrix& u, const Matrix& v) {
  if (u.size() != v.size())
    throw ContractViolation("sq_dist: length mismatch " + u.shape() + " vs " + v.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return s;
}

// Column vector holding the mean of the rows of X.
inline Matrix mean_rows(const Matrix& x) {
  if (x.empty()) throw ContractViolation("mean_rows: empty matrix");
  Matrix out(x.cols(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  for (std::size_t j = 0; j < x.cols(); ++j) out[j] /= static_cast<double>(x.rows());
  return out;
}

// Column vector sum_i w_i * row_i(X).
inline Matrix weighted_sum_rows(const Matrix& x, const Matrix& w) {
  if (x.empty()) throw ContractViolation("weighted_sum_rows: empty matrix");
  if (w.size() != x.rows())
    throw ContractViolation("weighted_sum_rows: weight length " + std::to_string(w.size()) +
                            " != row count " + std::to_string(x.rows()));
  Matrix out(x.cols(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double wi = w[i];
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += wi * x(i, j);
  }
  return out;
}

inline double sum_sq(const Matrix& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
  return s;
}

}  // namespace scilm
