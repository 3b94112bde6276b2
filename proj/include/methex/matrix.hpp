#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "methex/rng.hpp"

namespace methex {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void randomize(Rng& rng, double scale) {
    for (double& x : data_) x = rng.uniform(-scale, scale);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A trainable array with its gradient accumulator. Row-sparse parameters
// (embedding tables) record which rows received gradient so the optimizer
// and the zeroing pass only touch those rows.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool row_sparse = false;
  std::vector<std::size_t> touched;
  std::vector<char> touched_flag;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols, bool sparse = false)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), row_sparse(sparse) {
    if (sparse) touched_flag.assign(rows, 0);
  }

  void touch(std::size_t r) {
    if (row_sparse && !touched_flag[r]) {
      touched_flag[r] = 1;
      touched.push_back(r);
    }
  }

  void zero_grad() {
    if (!row_sparse) {
      grad.fill(0.0);
      return;
    }
    for (std::size_t r : touched) {
      auto g = grad.row(r);
      std::fill(g.begin(), g.end(), 0.0);
      touched_flag[r] = 0;
    }
    touched.clear();
  }

  // Keeps the gradient buffer shaped like the value after a resize or load.
  void sync_shape() {
    grad = Matrix(value.rows(), value.cols());
    touched.clear();
    if (row_sparse) touched_flag.assign(value.rows(), 0);
  }
};

// out[r] += W * x, with W of shape rows x x.size().
inline void gemv_add(const Matrix& w, std::span<const double> x, std::span<double> out) {
  assert(w.cols() == x.size() && w.rows() == out.size());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row(r).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) acc += wr[c] * x[c];
    out[r] += acc;
  }
}

// out += W^T * y.
inline void gemv_t_add(const Matrix& w, std::span<const double> y, std::span<double> out) {
  assert(w.rows() == y.size() && w.cols() == out.size());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* wr = w.row(r).data();
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += wr[c] * yr;
  }
}

// G += y x^T.
inline void outer_add(Matrix& g, std::span<const double> y, std::span<const double> x) {
  assert(g.rows() == y.size() && g.cols() == x.size());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* gr = g.row(r).data();
    for (std::size_t c = 0; c < x.size(); ++c) gr[c] += yr * x[c];
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace methex
