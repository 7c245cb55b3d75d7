#include "dvsa/tensor.hpp"

#include <algorithm>

namespace dvsa {

double cosine(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size())
    throw ShapeError("cosine: length mismatch " + u.shape_str() + " vs " + v.shape_str());
  double nu = norm2(u.data.data(), u.size());
  double nv = norm2(v.data.data(), v.size());
  if (nu == 0.0 || nv == 0.0)
    throw DegenerateInputError("cosine: zero-norm vector");
  double c = dot(u.data.data(), v.data.data(), u.size()) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

Tensor gap(const Tensor& f) {
  if (f.n_rows == 0) throw DegenerateInputError("gap: zero rows");
  Tensor out(1, f.n_cols, 0.0);
  for (std::size_t r = 0; r < f.n_rows; ++r)
    for (std::size_t c = 0; c < f.n_cols; ++c) out.data[c] += f.at(r, c);
  for (double& v : out.data) v /= static_cast<double>(f.n_rows);
  return out;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  if (a.n_cols != b.n_rows)
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str());
  Tensor out(a.n_rows, b.n_cols, 0.0);
  for (std::size_t i = 0; i < a.n_rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.n_cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.n_cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor softmax_rows_plain(const Tensor& x) {
  Tensor out(x.n_rows, x.n_cols);
  for (std::size_t i = 0; i < x.n_rows; ++i) {
    const double* xr = x.row(i);
    double* orow = out.row(i);
    double mx = *std::max_element(xr, xr + x.n_cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.n_cols; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < x.n_cols; ++j) orow[j] /= sum;
  }
  return out;
}

Tensor cosine_matrix_plain(const Tensor& a, const Tensor& b) {
  if (a.n_cols != b.n_cols)
    throw ShapeError("cosine_matrix: dimension mismatch " + a.shape_str() + " vs " + b.shape_str());
  std::vector<double> na(a.n_rows), nb(b.n_rows);
  for (std::size_t i = 0; i < a.n_rows; ++i) {
    na[i] = norm2(a.row(i), a.n_cols);
    if (na[i] == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm left row " + std::to_string(i));
  }
  for (std::size_t j = 0; j < b.n_rows; ++j) {
    nb[j] = norm2(b.row(j), b.n_cols);
    if (nb[j] == 0.0) throw DegenerateInputError("cosine_matrix: zero-norm right row " + std::to_string(j));
  }
  Tensor out(a.n_rows, b.n_rows);
  for (std::size_t i = 0; i < a.n_rows; ++i)
    for (std::size_t j = 0; j < b.n_rows; ++j)
      out.at(i, j) = std::clamp(dot(a.row(i), b.row(j), a.n_cols) / (na[i] * nb[j]), -1.0, 1.0);
  return out;
}

}  // namespace dvsa
