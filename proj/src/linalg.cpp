// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/linalg.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "iflow/errors.hpp"

namespace iflow {

LuFactors lu_decompose(const std::vector<double>& w, int n) {
  if (n < 1 || w.size() != static_cast<size_t>(n) * n) {
    fail(ErrorCode::kModel, "LU needs a non-empty square matrix");
  }
  const size_t N = static_cast<size_t>(n);
  std::vector<double> a = w;
  std::vector<int> piv(N);
  for (int i = 0; i < n; ++i) piv[i] = i;
  double scale = 0;
  for (double v : w) scale = std::fmax(scale, std::fabs(v));
  if (!(scale > 0) || !std::isfinite(scale)) fail(ErrorCode::kModel, "matrix is zero or non-finite");

  for (size_t col = 0; col < N; ++col) {
    size_t best = col;
    for (size_t r = col + 1; r < N; ++r) {
      if (std::fabs(a[r * N + col]) > std::fabs(a[best * N + col])) best = r;
    }
    if (std::fabs(a[best * N + col]) <= 1e-12 * scale) {
      fail(ErrorCode::kModel, "matrix is singular to working precision");
    }
    if (best != col) {
      for (size_t j = 0; j < N; ++j) std::swap(a[col * N + j], a[best * N + j]);
      std::swap(piv[col], piv[best]);
    }
    const double p = a[col * N + col];
    for (size_t r = col + 1; r < N; ++r) {
      const double f = a[r * N + col] / p;
      a[r * N + col] = f;
      for (size_t j = col + 1; j < N; ++j) a[r * N + j] -= f * a[col * N + j];
    }
  }

  LuFactors out;
  out.n = n;
  out.pivot = piv;
  out.lower.assign(N * N, 0.0);
  out.upper.assign(N * N, 0.0);
  out.diag.resize(N);
  for (size_t i = 0; i < N; ++i) {
    out.lower[i * N + i] = 1.0;
    out.upper[i * N + i] = 1.0;
    out.diag[i] = a[i * N + i];
    out.log2_abs_det += std::log2(std::fabs(out.diag[i]));
    for (size_t j = 0; j < i; ++j) out.lower[i * N + j] = a[i * N + j];
    for (size_t j = i + 1; j < N; ++j) out.upper[i * N + j] = a[i * N + j] / out.diag[i];
  }
  return out;
}

std::vector<double> LuFactors::reconstruct() const {
  const size_t N = static_cast<size_t>(n);
  std::vector<double> w(N * N, 0.0);
  for (size_t i = 0; i < N; ++i) {
    for (size_t j = 0; j < N; ++j) {
      double s = 0;
      for (size_t t = 0; t < N; ++t) s += lower[i * N + t] * diag[t] * upper[t * N + j];
      w[static_cast<size_t>(pivot[i]) * N + j] = s;
    }
  }
  return w;
}

double log2_abs_det(const std::vector<double>& w, int n) { return lu_decompose(w, n).log2_abs_det; }

}  // namespace iflow
