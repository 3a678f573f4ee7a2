// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace iflow {

// W = P L D U for a square row-major W, with L unit lower-triangular, D
// diagonal and U unit upper-triangular. P is stored as `pivot`: row i of
// L D U is row pivot[i] of W.
struct LuFactors {
  int n = 0;
  std::vector<int> pivot;
  std::vector<double> lower;  // n x n, row-major, unit diagonal
  std::vector<double> diag;   // n
  std::vector<double> upper;  // n x n, row-major, unit diagonal
  double log2_abs_det = 0;

  std::vector<double> reconstruct() const;
};

// Gaussian elimination with partial pivoting. Throws kModel when the matrix is
// singular to working precision.
LuFactors lu_decompose(const std::vector<double>& w, int n);

// Dense determinant by the same elimination (for checks).
double log2_abs_det(const std::vector<double>& w, int n);

}  // namespace iflow
