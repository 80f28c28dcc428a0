// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace mxsim {

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ar[t] * br[t];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) { return matmul_nt(a, transpose(b)); }

bool all_finite(const Matrix& a) {
  return std::all_of(a.flat().begin(), a.flat().end(), [](double v) { return std::isfinite(v); });
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.flat()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace mxsim
