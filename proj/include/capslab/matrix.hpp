#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "capslab/errors.hpp"

namespace capslab {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Deliberately minimal: storage plus the
/// few kernels the network engine needs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  Vec data_;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// out = M * x
inline void matvec(const Matrix& m, std::span<const double> x, Vec& out) {
  if (x.size() != m.cols()) throw ShapeError("matvec: input length does not match matrix columns");
  out.assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.data() + r * m.cols();
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

/// out += M^T * g
inline void matvec_transpose_acc(const Matrix& m, std::span<const double> g, Vec& out) {
  if (g.size() != m.rows()) throw ShapeError("matvec_transpose_acc: gradient length does not match rows");
  if (out.size() != m.cols()) out.assign(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.data() + r * m.cols();
    const double gr = g[r];
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * gr;
  }
}

/// acc += g * x^T (outer product)
inline void outer_acc(std::span<const double> g, std::span<const double> x, Matrix& acc) {
  if (acc.rows() != g.size() || acc.cols() != x.size())
    throw ShapeError("outer_acc: accumulator shape mismatch");
  for (std::size_t r = 0; r < g.size(); ++r) {
    double* row = acc.data() + r * acc.cols();
    const double gr = g[r];
    for (std::size_t c = 0; c < x.size(); ++c) row[c] += gr * x[c];
  }
}

}  // namespace capslab
