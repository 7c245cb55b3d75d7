#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvsa {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateInputError : std::runtime_error {
  explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major matrix of doubles. Everything in this project is either a
// matrix, a row vector (1 x n) or a scalar (1 x 1).
struct Tensor {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : n_rows(rows), n_cols(cols), data(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : n_rows(rows), n_cols(cols), data(std::move(values)) {
    if (data.size() != rows * cols)
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }

  double& at(std::size_t r, std::size_t c) { return data[r * n_cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * n_cols + c]; }

  std::size_t size() const { return data.size(); }

  const double* row(std::size_t r) const { return data.data() + r * n_cols; }
  double* row(std::size_t r) { return data.data() + r * n_cols; }

  bool same_shape(const Tensor& other) const {
    return n_rows == other.n_rows && n_cols == other.n_cols;
  }

  std::string shape_str() const {
    return std::to_string(n_rows) + "x" + std::to_string(n_cols);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 0.0); }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }
};

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// cos(u, v), clamped to [-1, 1]. Zero-norm inputs indicate a setup bug upstream.
double cosine(const Tensor& u, const Tensor& v);

// Column-wise mean over the rows of F (global average pooling). Returns 1 x d.
Tensor gap(const Tensor& f);

Tensor matmul_plain(const Tensor& a, const Tensor& b);
Tensor softmax_rows_plain(const Tensor& x);

// (m x d, n x d) -> m x n of cos(a_i, b_j); throws on zero-norm rows.
Tensor cosine_matrix_plain(const Tensor& a, const Tensor& b);

}  // namespace dvsa
